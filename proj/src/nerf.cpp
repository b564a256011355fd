#include "fieldgen/nerf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fieldgen {

std::vector<double> stratified_samples(double t_near, double t_far, int n,
                                       std::mt19937_64* rng) {
    if (n <= 0 || t_far <= t_near)
        throw std::invalid_argument("stratified_samples: bad range or count");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double w = (t_far - t_near) / n;
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) {
        double u = rng ? uni(*rng) : 0.5;
        t[i] = t_near + (i + u) * w;
    }
    return t;
}

std::vector<double> importance_samples(const std::vector<double>& coarse_t,
                                       double terminal_edge,
                                       const std::vector<double>& weights,
                                       int n_fine, std::mt19937_64& rng) {
    size_t n = coarse_t.size();
    if (weights.size() != n || n == 0)
        throw std::invalid_argument("importance_samples: size mismatch");
    std::vector<double> edges(n + 1);
    std::copy(coarse_t.begin(), coarse_t.end(), edges.begin());
    edges[n] = terminal_edge;

    std::vector<double> cdf(n + 1, 0.0);
    double total = 0;
    for (size_t i = 0; i < n; ++i) {
        double w = std::isfinite(weights[i]) ? std::max(weights[i], 0.0) : 0.0;
        total += w;
        cdf[i + 1] = total;
    }

    std::vector<double> fine;
    if (total <= 0.0) {
        fine = stratified_samples(edges.front(), edges.back(), n_fine, &rng);
    } else {
        fine.resize(n_fine);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (int k = 0; k < n_fine; ++k) {
            double u = (k + uni(rng)) / n_fine * total;
            size_t hi = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
            hi = std::min(std::max<size_t>(hi, 1), n);
            double lo_c = cdf[hi - 1], seg = cdf[hi] - cdf[hi - 1];
            double frac = seg > 0 ? (u - lo_c) / seg : 0.5;
            fine[k] = edges[hi - 1] + frac * (edges[hi] - edges[hi - 1]);
        }
    }

    std::vector<double> merged;
    merged.reserve(n + n_fine);
    merged.insert(merged.end(), coarse_t.begin(), coarse_t.end());
    merged.insert(merged.end(), fine.begin(), fine.end());
    std::sort(merged.begin(), merged.end());
    // inverse-CDF draws can collide with bin edges; keep samples strictly
    // increasing so segment lengths stay positive
    for (size_t i = 1; i < merged.size(); ++i)
        if (merged[i] <= merged[i - 1])
            merged[i] = std::nextafter(merged[i - 1],
                                       std::numeric_limits<double>::max());
    return merged;
}

std::vector<double> deltas_from_samples(const std::vector<double>& t,
                                        double terminal_delta) {
    std::vector<double> d(t.size());
    for (size_t i = 0; i + 1 < t.size(); ++i) {
        d[i] = t[i + 1] - t[i];
        if (d[i] < 0)
            throw std::invalid_argument("deltas_from_samples: samples not sorted");
    }
    if (terminal_delta < 0)
        throw std::invalid_argument("deltas_from_samples: negative terminal delta");
    d.back() = terminal_delta;
    return d;
}

QuadratureOut render_quadrature(const Tensor& sigma, const Tensor& rgb,
                                const Tensor& deltas) {
    if (sigma.ndim() != 2 || rgb.ndim() != 3 || deltas.ndim() != 2)
        throw std::invalid_argument("render_quadrature: expected [R,N], [R,N,3], [R,N]");
    int64_t R = sigma.dim(0), N = sigma.dim(1);
    Tensor sd = mul(sigma, deltas);                          // [R,N]
    Tensor trans_to = exp(neg(cumsum_exclusive_last(sd)));   // T_i
    Tensor alpha = add_scalar(neg(exp(neg(sd))), 1.0);       // 1 - e^{-sigma delta}
    Tensor w = mul(trans_to, alpha);
    Tensor color = sum_axis(mul(reshape(w, {R, N, 1}), rgb), 1);
    Tensor trans = add_scalar(neg(exp(neg(sum_axis(sd, 1)))), 1.0);
    return {color, trans, w};
}

namespace {

Tensor points_along(const std::vector<Ray>& rays,
                    const std::vector<std::vector<double>>& ts, int64_t per_ray) {
    std::vector<double> pts(rays.size() * per_ray * 3);
    for (size_t r = 0; r < rays.size(); ++r)
        for (int64_t i = 0; i < per_ray; ++i) {
            Vec3 p = rays[r].origin + rays[r].dir * ts[r][i];
            double* dst = &pts[(r * per_ray + i) * 3];
            dst[0] = p.x;
            dst[1] = p.y;
            dst[2] = p.z;
        }
    return Tensor::from_data({static_cast<int64_t>(rays.size()) * per_ray, 3},
                             std::move(pts));
}

Tensor dirs_along(const std::vector<Ray>& rays, int64_t per_ray) {
    std::vector<double> d(rays.size() * per_ray * 3);
    for (size_t r = 0; r < rays.size(); ++r)
        for (int64_t i = 0; i < per_ray; ++i) {
            double* dst = &d[(r * per_ray + i) * 3];
            dst[0] = rays[r].dir.x;
            dst[1] = rays[r].dir.y;
            dst[2] = rays[r].dir.z;
        }
    return Tensor::from_data({static_cast<int64_t>(rays.size()) * per_ray, 3},
                             std::move(d));
}

Tensor deltas_tensor(const std::vector<Ray>& rays,
                     const std::vector<std::vector<double>>& ts, int64_t per_ray,
                     int base_bins) {
    std::vector<double> d(rays.size() * per_ray);
    for (size_t r = 0; r < rays.size(); ++r) {
        double term = (rays[r].t_far - rays[r].t_near) / base_bins;
        auto dr = deltas_from_samples(ts[r], term);
        std::copy(dr.begin(), dr.end(), &d[r * per_ray]);
    }
    return Tensor::from_data({static_cast<int64_t>(rays.size()), per_ray},
                             std::move(d));
}

}  // namespace

RayBatchRender render_rays(const INRParams& inr, const std::vector<Ray>& rays,
                           const NerfConfig& cfg, std::mt19937_64& rng,
                           bool with_dirs) {
    int64_t R = static_cast<int64_t>(rays.size());
    int Nc = cfg.coarse_samples, Nf = cfg.fine_samples;

    std::vector<std::vector<double>> coarse_ts(R);
    for (int64_t r = 0; r < R; ++r)
        coarse_ts[r] = stratified_samples(rays[r].t_near, rays[r].t_far, Nc, &rng);

    Tensor cpts = points_along(rays, coarse_ts, Nc);
    Tensor cdirs = with_dirs ? dirs_along(rays, Nc) : Tensor();
    FieldBatch cfield = eval_inr(inr, cpts, cdirs, kHeadCoarse);
    Tensor csigma = reshape(cfield.sigma_coarse, {R, Nc});
    Tensor crgb = reshape(cfield.rgb_coarse, {R, Nc, 3});
    Tensor cdelta = deltas_tensor(rays, coarse_ts, Nc, Nc);
    QuadratureOut coarse = render_quadrature(csigma, crgb, cdelta);

    int Nt = Nc + Nf;
    std::vector<std::vector<double>> fine_ts(R);
    const auto& wdata = coarse.weights.data();
    for (int64_t r = 0; r < R; ++r) {
        std::vector<double> w(wdata.begin() + r * Nc, wdata.begin() + (r + 1) * Nc);
        fine_ts[r] = importance_samples(coarse_ts[r], rays[r].t_far, w, Nf, rng);
    }

    Tensor fpts = points_along(rays, fine_ts, Nt);
    Tensor fdirs = with_dirs ? dirs_along(rays, Nt) : Tensor();
    FieldBatch ffield = eval_inr(inr, fpts, fdirs, kHeadFine);
    Tensor fsigma = reshape(ffield.sigma_fine, {R, Nt});
    Tensor frgb = reshape(ffield.rgb_fine, {R, Nt, 3});
    Tensor fdelta = deltas_tensor(rays, fine_ts, Nt, Nc);
    QuadratureOut fine = render_quadrature(fsigma, frgb, fdelta);

    RayBatchRender out;
    out.color_coarse = coarse.color;
    out.color_fine = fine.color;
    out.trans_coarse = coarse.trans;
    out.trans_fine = fine.trans;
    out.fine_t.reserve(R * Nt);
    for (auto& ft : fine_ts) out.fine_t.insert(out.fine_t.end(), ft.begin(), ft.end());
    return out;
}

Tensor nerf_loss(const RayBatchRender& render, const Tensor& target_rgb,
                 const Tensor& target_alpha) {
    auto l1_channels = [&](const Tensor& c) {
        return mean(sum_axis(abs(sub(c, target_rgb)), 1));
    };
    Tensor l_rgb = add(l1_channels(render.color_coarse),
                       l1_channels(render.color_fine));
    Tensor l_t = add(mean(abs(sub(render.trans_coarse, target_alpha))),
                     mean(abs(sub(render.trans_fine, target_alpha))));
    return add(l_rgb, l_t);
}

Tensor nerf_loss(const INRParams& inr, const std::vector<Ray>& rays,
                 const Tensor& target_rgb, const Tensor& target_alpha,
                 const NerfConfig& cfg, std::mt19937_64& rng, bool with_dirs) {
    RayBatchRender r = render_rays(inr, rays, cfg, rng, with_dirs);
    return nerf_loss(r, target_rgb, target_alpha);
}

Image render_image_nerf(const INRParams& inr, const Camera& cam,
                        const NerfConfig& cfg) {
    double dist = cam.origin.norm();
    double t_near = std::max(dist - cfg.scene_radius, 1e-3);
    double t_far = dist + cfg.scene_radius;
    std::vector<Ray> rays = cast_rays(cam, t_near, t_far);

    Image img(cam.width, cam.height, 4);
    std::mt19937_64 rng(cfg.sample_seed);
    for (size_t start = 0; start < rays.size(); start += cfg.chunk_rays) {
        size_t end = std::min(rays.size(), start + cfg.chunk_rays);
        std::vector<Ray> chunk(rays.begin() + start, rays.begin() + end);
        RayBatchRender r = render_rays(inr, chunk, cfg, rng, false);
        for (size_t k = 0; k < chunk.size(); ++k) {
            size_t pix = start + k;
            int row = static_cast<int>(pix) / cam.width;
            int col = static_cast<int>(pix) % cam.width;
            for (int c = 0; c < 3; ++c)
                img.at(row, col, c) =
                    static_cast<float>(r.color_fine.at(k * 3 + c));
            img.at(row, col, 3) = static_cast<float>(r.trans_fine.at(k));
        }
    }
    return img;
}

}  // namespace fieldgen
