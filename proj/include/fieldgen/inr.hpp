#pragma once

#include <random>

#include "fieldgen/tensor.hpp"

namespace fieldgen {

// Per-coordinate sinusoidal expansion [x, cos(2^0 x), sin(2^0 x), ...,
// cos(2^{oct-1} x), sin(2^{oct-1} x)]; width 1 + 2*octaves per scalar.
// Input [...,3] -> output [..., 3*(1+2*octaves)].
Tensor posenc(const Tensor& x, int octaves);
inline int posenc_width(int octaves) { return 3 * (1 + 2 * octaves); }

struct InrConfig {
    int hidden = 16;            // H; latent length must equal 4*H
    int octaves = 8;            // 15 at paper scale
    double density_scale = 100.0;
    DType dtype = DType::f64;
};

// Layers shared across assets: input projection, trunk tail, and the six
// output heads. No biases anywhere.
struct SharedLayers {
    Tensor input_proj;  // [2*posenc_width, H]
    Tensor w5, w6;      // [H,H]
    Tensor head_sigma_coarse, head_sigma_fine;  // [H,1]
    Tensor head_rgb_coarse, head_rgb_fine;      // [H,3]
    Tensor head_sdf;                            // [H,1]
    Tensor head_tex;                            // [H,3]

    static SharedLayers init(const InrConfig& cfg, std::mt19937_64& rng);
    std::vector<Tensor> params();
    std::vector<std::pair<std::string, Tensor>> named_params();
};

struct INRParams {
    Tensor w1, w2, w3, w4;  // [H,H], projected from the latent
    SharedLayers* shared = nullptr;
    InrConfig cfg;
};

// Row-wise projection of a latent [K,D] through row_proj [D,H], stacked
// into four [H,H] matrices (K == 4H required).
INRParams assemble_params(const Tensor& latent, const Tensor& row_proj,
                          SharedLayers& shared, const InrConfig& cfg);

enum HeadMask : unsigned {
    kHeadCoarse = 1,
    kHeadFine = 2,
    kHeadStf = 4,
    kHeadAll = 7,
};

struct FieldBatch {
    Tensor sigma_coarse, sigma_fine;  // [P], >= 0
    Tensor rgb_coarse, rgb_fine;      // [P,3], >= 0
    Tensor sdf;                       // [P], in (-1,1)
    Tensor tex;                       // [P,3], in (0,1)
};

// One trunk pass over P points. `dirs` may be undefined, which uses the
// reserved zero direction embedding.
FieldBatch eval_inr(const INRParams& inr, const Tensor& points, const Tensor& dirs,
                    unsigned heads = kHeadAll);

}  // namespace fieldgen
