#include "fieldgen/inr.hpp"

#include <cmath>

namespace fieldgen {

Tensor posenc(const Tensor& x, int octaves) {
    for (double v : x.data())
        if (!std::isfinite(v))
            throw std::invalid_argument("posenc: non-finite coordinate");
    if (x.shape().back() != 3)
        throw std::invalid_argument("posenc: last dim must be 3, got " +
                                    shape_str(x.shape()));
    int w = 1 + 2 * octaves;
    int64_t pts = x.numel() / 3;
    std::vector<int64_t> out_shape = x.shape();
    out_shape.back() = 3 * w;
    std::vector<double> out(pts * 3 * w);
    const auto& xd = x.data();
    for (int64_t p = 0; p < pts; ++p)
        for (int c = 0; c < 3; ++c) {
            double v = xd[p * 3 + c];
            double* dst = &out[(p * 3 + c) * w];
            dst[0] = v;
            double f = 1.0;
            for (int k = 0; k < octaves; ++k, f *= 2.0) {
                dst[1 + 2 * k] = std::cos(f * v);
                dst[2 + 2 * k] = std::sin(f * v);
            }
        }
    auto back = [octaves, w, pts](Node& n) {
        Node* p = n.parents[0].node();
        for (int64_t i = 0; i < pts; ++i)
            for (int c = 0; c < 3; ++c) {
                double v = p->data[i * 3 + c];
                const double* g = &n.grad[(i * 3 + c) * w];
                double acc = g[0];
                double f = 1.0;
                for (int k = 0; k < octaves; ++k, f *= 2.0)
                    acc += f * (-std::sin(f * v) * g[1 + 2 * k] +
                                std::cos(f * v) * g[2 + 2 * k]);
                p->grad[i * 3 + c] += acc;
            }
    };
    return make_op(out_shape, std::move(out), {x}, back, x.dtype());
}

SharedLayers SharedLayers::init(const InrConfig& cfg, std::mt19937_64& rng) {
    int H = cfg.hidden;
    int E = posenc_width(cfg.octaves);
    auto mat = [&](int in, int out_w) {
        return Tensor::randn({in, out_w}, rng, 1.0 / std::sqrt(in), cfg.dtype, true);
    };
    SharedLayers s;
    s.input_proj = mat(2 * E, H);
    s.w5 = mat(H, H);
    s.w6 = mat(H, H);
    s.head_sigma_coarse = mat(H, 1);
    s.head_sigma_fine = mat(H, 1);
    s.head_rgb_coarse = mat(H, 3);
    s.head_rgb_fine = mat(H, 3);
    s.head_sdf = mat(H, 1);
    s.head_tex = mat(H, 3);
    return s;
}

std::vector<Tensor> SharedLayers::params() {
    return {input_proj,      w5,          w6,       head_sigma_coarse,
            head_sigma_fine, head_rgb_coarse, head_rgb_fine, head_sdf,
            head_tex};
}

std::vector<std::pair<std::string, Tensor>> SharedLayers::named_params() {
    return {{"inr.input_proj", input_proj},
            {"inr.w5", w5},
            {"inr.w6", w6},
            {"inr.head_sigma_coarse", head_sigma_coarse},
            {"inr.head_sigma_fine", head_sigma_fine},
            {"inr.head_rgb_coarse", head_rgb_coarse},
            {"inr.head_rgb_fine", head_rgb_fine},
            {"inr.head_sdf", head_sdf},
            {"inr.head_tex", head_tex}};
}

INRParams assemble_params(const Tensor& latent, const Tensor& row_proj,
                          SharedLayers& shared, const InrConfig& cfg) {
    int64_t K = latent.dim(0);
    int H = cfg.hidden;
    if (K % 4 != 0)
        throw std::invalid_argument("assemble_params: latent length " +
                                    std::to_string(K) + " not divisible by 4");
    if (K != 4 * H)
        throw std::invalid_argument("assemble_params: latent length " +
                                    std::to_string(K) + " != 4*hidden (" +
                                    std::to_string(4 * H) + ")");
    if (latent.dim(1) != row_proj.dim(0))
        throw std::invalid_argument("assemble_params: latent width " +
                                    std::to_string(latent.dim(1)) +
                                    " vs projection input " +
                                    std::to_string(row_proj.dim(0)));
    Tensor rows = matmul(latent, row_proj);  // [K,H]
    INRParams p;
    p.w1 = slice(rows, 0, 0, H);
    p.w2 = slice(rows, 0, H, H);
    p.w3 = slice(rows, 0, 2 * H, H);
    p.w4 = slice(rows, 0, 3 * H, H);
    p.shared = &shared;
    p.cfg = cfg;
    return p;
}

FieldBatch eval_inr(const INRParams& inr, const Tensor& points, const Tensor& dirs,
                    unsigned heads) {
    const SharedLayers& s = *inr.shared;
    Tensor ex = posenc(points, inr.cfg.octaves);
    Tensor ed;
    if (dirs.defined()) {
        ed = posenc(dirs, inr.cfg.octaves);
    } else {
        auto sh = ex.shape();
        ed = Tensor::zeros(sh, ex.dtype());
    }
    Tensor h = silu(matmul(concat({ex, ed}, static_cast<int>(ex.shape().size()) - 1),
                           s.input_proj));
    for (const Tensor* w : {&inr.w1, &inr.w2, &inr.w3, &inr.w4, &s.w5, &s.w6})
        h = silu(matmul(h, *w));

    int64_t P = h.dim(0);
    FieldBatch out;
    auto squeeze = [P](const Tensor& t) { return reshape(t, {P}); };
    if (heads & kHeadCoarse) {
        out.sigma_coarse =
            squeeze(mul_scalar(sigmoid(matmul(h, s.head_sigma_coarse)),
                               inr.cfg.density_scale));
        out.rgb_coarse = relu(matmul(h, s.head_rgb_coarse));
    }
    if (heads & kHeadFine) {
        out.sigma_fine = squeeze(mul_scalar(sigmoid(matmul(h, s.head_sigma_fine)),
                                            inr.cfg.density_scale));
        out.rgb_fine = relu(matmul(h, s.head_rgb_fine));
    }
    if (heads & kHeadStf) {
        out.sdf = squeeze(tanh(matmul(h, s.head_sdf)));
        out.tex = sigmoid(matmul(h, s.head_tex));
    }
    return out;
}

}  // namespace fieldgen
