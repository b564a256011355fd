#pragma once

#include <random>

#include "fieldgen/geometry.hpp"
#include "fieldgen/image.hpp"
#include "fieldgen/inr.hpp"

namespace fieldgen {

struct NerfConfig {
    int coarse_samples = 32;
    int fine_samples = 64;
    int chunk_rays = 512;        // image rendering chunk size
    double scene_radius = 1.75;  // camera-centric near/far bound
    uint64_t sample_seed = 0;    // stream id for stratified/importance draws
};

// One uniform draw per equal-width bin over [t_near, t_far]; bin centers
// when rng is null. Strictly increasing.
std::vector<double> stratified_samples(double t_near, double t_far, int n,
                                       std::mt19937_64* rng);

// Inverse-CDF draws from the piecewise-constant density over the coarse
// bins; falls back to stratified when all weights vanish. Result is the
// sorted merge of coarse and fine positions.
std::vector<double> importance_samples(const std::vector<double>& coarse_t,
                                       double terminal_edge,
                                       const std::vector<double>& weights,
                                       int n_fine, std::mt19937_64& rng);

// Segment lengths: delta_i = t_{i+1} - t_i, terminal delta as given.
// Throws on unsorted samples.
std::vector<double> deltas_from_samples(const std::vector<double>& t,
                                        double terminal_delta);

struct QuadratureOut {
    Tensor color;    // [R,3]
    Tensor trans;    // [R], 1 - exp(-sum sigma delta)
    Tensor weights;  // [R,N]
};

// The discrete quadrature sums, differentiable through sigma and rgb.
QuadratureOut render_quadrature(const Tensor& sigma, const Tensor& rgb,
                                const Tensor& deltas);

struct RayBatchRender {
    Tensor color_coarse, color_fine;  // [R,3]
    Tensor trans_coarse, trans_fine;  // [R]
    // sample positions used by the fine pass, exposed for diagnostics
    std::vector<double> fine_t;
};

// Coarse pass, importance resampling from coarse weights, fine pass.
// `with_dirs` feeds per-ray direction embeddings (training); otherwise the
// zero embedding is used.
RayBatchRender render_rays(const INRParams& inr, const std::vector<Ray>& rays,
                           const NerfConfig& cfg, std::mt19937_64& rng,
                           bool with_dirs);

// L_RGB + L_T: L1 summed over channels, mean over rays, coarse + fine.
Tensor nerf_loss(const RayBatchRender& render, const Tensor& target_rgb,
                 const Tensor& target_alpha);

// Convenience: render + loss for a ray batch with given targets.
Tensor nerf_loss(const INRParams& inr, const std::vector<Ray>& rays,
                 const Tensor& target_rgb, const Tensor& target_alpha,
                 const NerfConfig& cfg, std::mt19937_64& rng, bool with_dirs);

// Full-frame non-differentiable render (fine head): RGBA, alpha = T-hat.
Image render_image_nerf(const INRParams& inr, const Camera& cam,
                        const NerfConfig& cfg);

}  // namespace fieldgen
