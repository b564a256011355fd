#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fieldgen/inr.hpp"

using namespace fieldgen;

namespace {

InrConfig small_cfg() {
    InrConfig cfg;
    cfg.hidden = 4;
    cfg.octaves = 2;
    return cfg;
}

struct Fixture {
    InrConfig cfg = small_cfg();
    std::mt19937_64 rng{7};
    SharedLayers shared = SharedLayers::init(cfg, rng);
    Tensor latent = Tensor::randn({16, 8}, rng, 1.0, DType::f64, true);
    Tensor row_proj = Tensor::randn({8, 4}, rng, 0.5, DType::f64, true);

    INRParams inr() { return assemble_params(latent, row_proj, shared, cfg); }
};

}  // namespace

TEST_CASE("posenc width and zero-point layout") {
    CHECK(1 + 2 * 15 == 31);  // per-coordinate width at 15 octaves
    CHECK(posenc_width(8) == 3 * (1 + 2 * 8));

    Tensor x = Tensor::zeros({1, 3});
    Tensor e = posenc(x, 8);
    REQUIRE(e.shape() == std::vector<int64_t>({1, posenc_width(8)}));
    int w = 1 + 2 * 8;
    for (int c = 0; c < 3; ++c) {
        CHECK(e.at(c * w) == 0.0);  // identity slot
        for (int k = 0; k < 8; ++k) {
            CHECK(e.at(c * w + 1 + 2 * k) == 1.0);  // cos(0)
            CHECK(e.at(c * w + 2 + 2 * k) == 0.0);  // sin(0)
        }
    }
}

TEST_CASE("posenc values at a generic point") {
    Tensor x = Tensor::from_data({1, 3}, {0.5, -0.25, 1.0});
    Tensor e = posenc(x, 2);
    // per coordinate: [v, cos v, sin v, cos 2v, sin 2v]
    double v = 0.5;
    CHECK(e.at(0) == doctest::Approx(v));
    CHECK(e.at(1) == doctest::Approx(std::cos(v)));
    CHECK(e.at(2) == doctest::Approx(std::sin(v)));
    CHECK(e.at(3) == doctest::Approx(std::cos(2 * v)));
    CHECK(e.at(4) == doctest::Approx(std::sin(2 * v)));
    CHECK(e.at(5) == doctest::Approx(-0.25));
}

TEST_CASE("posenc separates nearby points") {
    std::mt19937_64 rng(3);
    Tensor pts = Tensor::rand_uniform({64, 3}, rng, -1.0, 1.0);
    Tensor e = posenc(pts, 8);
    int w = posenc_width(8);
    for (int i = 0; i < 64; ++i)
        for (int j = i + 1; j < 64; ++j) {
            double d = 0;
            for (int k = 0; k < w; ++k)
                d = std::max(d, std::abs(e.at(i * w + k) - e.at(j * w + k)));
            CHECK(d > 1e-6);
        }
}

TEST_CASE("posenc gradient matches finite differences") {
    std::mt19937_64 rng(11);
    Tensor x = Tensor::rand_uniform({4, 3}, rng, -1.0, 1.0, DType::f64, true);
    Tensor w = Tensor::rand_uniform({4, posenc_width(3)}, rng, -1.0, 1.0);
    auto loss_of = [&](const Tensor& p) { return sum(mul(posenc(p, 3), w)); };
    Tensor loss = loss_of(x);
    backward(loss);
    for (int64_t i = 0; i < x.numel(); ++i) {
        double h = 1e-6;
        Tensor xp = Tensor::from_data(x.shape(), x.data());
        xp.mutable_data()[i] += h;
        Tensor xm = Tensor::from_data(x.shape(), x.data());
        xm.mutable_data()[i] -= h;
        double fd = (loss_of(xp).item() - loss_of(xm).item()) / (2 * h);
        CHECK(x.grad()[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("posenc rejects non-finite input and bad width") {
    Tensor bad = Tensor::from_data({1, 3}, {0.0, std::nan(""), 0.0});
    CHECK_THROWS_AS(posenc(bad, 4), std::invalid_argument);
    Tensor wide = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(posenc(wide, 4), std::invalid_argument);
}

TEST_CASE("assemble stacks latent rows into four square matrices") {
    Fixture f;
    INRParams p = f.inr();
    for (const Tensor* w : {&p.w1, &p.w2, &p.w3, &p.w4})
        CHECK(w->shape() == std::vector<int64_t>({4, 4}));

    // row i of the projected latent lands in matrix i/H, row i%H
    Tensor rows = matmul(f.latent, f.row_proj);
    const Tensor* mats[4] = {&p.w1, &p.w2, &p.w3, &p.w4};
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(mats[i / 4]->at((i % 4) * 4 + j) ==
                  doctest::Approx(rows.at(i * 4 + j)));
}

TEST_CASE("latent row locality") {
    Fixture f;
    INRParams base = f.inr();
    Tensor bumped = Tensor::from_data(f.latent.shape(), f.latent.data());
    for (int j = 0; j < 8; ++j) bumped.mutable_data()[5 * 8 + j] += 0.5;
    INRParams after = assemble_params(bumped, f.row_proj, f.shared, f.cfg);

    const Tensor* b[4] = {&base.w1, &base.w2, &base.w3, &base.w4};
    const Tensor* a[4] = {&after.w1, &after.w2, &after.w3, &after.w4};
    for (int m = 0; m < 4; ++m)
        for (int r = 0; r < 4; ++r) {
            bool same = true;
            for (int c = 0; c < 4; ++c)
                if (a[m]->at(r * 4 + c) != b[m]->at(r * 4 + c)) same = false;
            CHECK(same == !(m == 1 && r == 1));  // latent row 5 -> W2 row 1
        }
}

TEST_CASE("zero latent gives zero per-asset weights") {
    Fixture f;
    Tensor z = Tensor::zeros({16, 8});
    INRParams p = assemble_params(z, f.row_proj, f.shared, f.cfg);
    for (const Tensor* w : {&p.w1, &p.w2, &p.w3, &p.w4})
        for (double v : w->data()) CHECK(v == 0.0);
}

TEST_CASE("assemble rejects malformed latents") {
    Fixture f;
    Tensor k10 = Tensor::zeros({10, 8});
    CHECK_THROWS_WITH_AS(assemble_params(k10, f.row_proj, f.shared, f.cfg),
                         doctest::Contains("not divisible by 4"),
                         std::invalid_argument);
    Tensor k8 = Tensor::zeros({8, 8});
    CHECK_THROWS_AS(assemble_params(k8, f.row_proj, f.shared, f.cfg),
                    std::invalid_argument);
    Tensor wide = Tensor::zeros({16, 9});
    CHECK_THROWS_AS(assemble_params(wide, f.row_proj, f.shared, f.cfg),
                    std::invalid_argument);
}

TEST_CASE("head outputs respect their ranges") {
    Fixture f;
    INRParams p = f.inr();
    std::mt19937_64 rng(19);
    Tensor pts = Tensor::rand_uniform({32, 3}, rng, -1.0, 1.0);
    Tensor dirs = Tensor::rand_uniform({32, 3}, rng, -1.0, 1.0);
    FieldBatch out = eval_inr(p, pts, dirs);
    for (double v : out.sigma_coarse.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= f.cfg.density_scale);
    }
    for (double v : out.sigma_fine.data()) CHECK(v >= 0.0);
    for (double v : out.rgb_coarse.data()) CHECK(v >= 0.0);
    for (double v : out.rgb_fine.data()) CHECK(v >= 0.0);
    for (double v : out.sdf.data()) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
    for (double v : out.tex.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK(out.sigma_coarse.shape() == std::vector<int64_t>({32}));
    CHECK(out.rgb_fine.shape() == std::vector<int64_t>({32, 3}));
}

TEST_CASE("zeroed head weights give the activation midpoints") {
    Fixture f;
    for (Tensor t : {f.shared.head_sigma_fine, f.shared.head_sdf,
                     f.shared.head_tex})
        std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    INRParams p = f.inr();
    std::mt19937_64 rng(5);
    Tensor pts = Tensor::rand_uniform({8, 3}, rng, -1.0, 1.0);
    FieldBatch out = eval_inr(p, pts, Tensor(), kHeadFine | kHeadStf);
    for (double v : out.sigma_fine.data())
        CHECK(v == doctest::Approx(0.5 * f.cfg.density_scale));
    for (double v : out.sdf.data()) CHECK(v == 0.0);
    for (double v : out.tex.data()) CHECK(v == 0.5);
}

TEST_CASE("evaluation is deterministic and head masks skip work") {
    Fixture f;
    INRParams p = f.inr();
    std::mt19937_64 rng(23);
    Tensor pts = Tensor::rand_uniform({16, 3}, rng, -1.0, 1.0);
    FieldBatch a = eval_inr(p, pts, Tensor(), kHeadAll);
    FieldBatch b = eval_inr(p, pts, Tensor(), kHeadAll);
    for (int64_t i = 0; i < a.sigma_fine.numel(); ++i)
        CHECK(a.sigma_fine.at(i) == b.sigma_fine.at(i));
    FieldBatch c = eval_inr(p, pts, Tensor(), kHeadCoarse);
    CHECK(!c.sdf.defined());
    CHECK(!c.sigma_fine.defined());
    CHECK(c.sigma_coarse.defined());
}

TEST_CASE("latent gradient through the full network matches finite differences") {
    Fixture f;
    std::mt19937_64 rng(31);
    Tensor pts = Tensor::rand_uniform({3, 3}, rng, -0.8, 0.8);
    auto loss_of = [&](const Tensor& lat) {
        INRParams p = assemble_params(lat, f.row_proj, f.shared, f.cfg);
        FieldBatch out = eval_inr(p, pts, Tensor(), kHeadFine | kHeadStf);
        return add(add(sum(out.sigma_fine), sum(out.tex)), sum(out.sdf));
    };
    Tensor loss = loss_of(f.latent);
    backward(loss);
    std::mt19937_64 pick(1);
    for (int trial = 0; trial < 10; ++trial) {
        int64_t i = pick() % f.latent.numel();
        double h = 1e-5;
        Tensor lp = Tensor::from_data(f.latent.shape(), f.latent.data());
        lp.mutable_data()[i] += h;
        Tensor lm = Tensor::from_data(f.latent.shape(), f.latent.data());
        lm.mutable_data()[i] -= h;
        double fd = (loss_of(lp).item() - loss_of(lm).item()) / (2 * h);
        CHECK(f.latent.grad()[i] ==
              doctest::Approx(fd).epsilon(1e-4).scale(std::abs(fd) + 1e-3));
    }
}
