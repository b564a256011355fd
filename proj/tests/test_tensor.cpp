#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "fieldgen/tensor.hpp"

using namespace fieldgen;

namespace {

// Central finite differences of a scalar-valued function w.r.t. one leaf,
// compared against reverse-mode gradients. Step 1e-5, 64-bit.
void check_grad(const std::function<Tensor(std::vector<Tensor>&)>& f,
                std::vector<Tensor> leaves, double rel_tol = 1e-4) {
    for (auto& l : leaves) l.set_requires_grad(true);
    Tensor loss = f(leaves);
    backward(loss);
    const double h = 1e-5;
    for (auto& leaf : leaves) {
        for (int64_t i = 0; i < leaf.numel(); ++i) {
            double x0 = leaf.data()[i];
            leaf.mutable_data()[i] = x0 + h;
            double lp = f(leaves).item();
            leaf.mutable_data()[i] = x0 - h;
            double lm = f(leaves).item();
            leaf.mutable_data()[i] = x0;
            double fd = (lp - lm) / (2 * h);
            double ad = leaf.grad()[i];
            double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-6});
            CAPTURE(i);
            CAPTURE(fd);
            CAPTURE(ad);
            CHECK(std::fabs(fd - ad) / denom < rel_tol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise forward identities") {
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
    CHECK(silu(Tensor::scalar(0.0)).item() == doctest::Approx(0.0));
    CHECK(tanh(Tensor::scalar(0.0)).item() == doctest::Approx(0.0));
    CHECK(relu(Tensor::scalar(-2.0)).item() == 0.0);
    CHECK(relu(Tensor::scalar(3.0)).item() == 3.0);
}

TEST_CASE("matmul identity") {
    std::mt19937_64 rng(1);
    Tensor a = Tensor::randn({3, 3}, rng);
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor out = matmul(eye, a);
    for (int i = 0; i < 9; ++i) CHECK(out.data()[i] == doctest::Approx(a.data()[i]));
}

TEST_CASE("shape mismatch rejected with diagnostic naming both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    try {
        matmul(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,5]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({4})),
                    std::invalid_argument);
}

TEST_CASE("simple derivative identities") {
    Tensor x = Tensor::scalar(3.0);
    x.set_requires_grad(true);
    backward(mul(x, x));
    CHECK(x.grad()[0] == doctest::Approx(6.0));

    Tensor y = Tensor::scalar(0.0);
    y.set_requires_grad(true);
    backward(tanh(y));
    CHECK(y.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("non-scalar loss rejected") {
    Tensor x = Tensor::zeros({3}, DType::f64, true);
    CHECK_THROWS_AS(backward(x), std::invalid_argument);
}

TEST_CASE("L2 loss gradient w.r.t. matrix matches finite differences") {
    std::mt19937_64 rng(7);
    Tensor A = Tensor::randn({4, 4}, rng);
    Tensor x = Tensor::randn({4, 1}, rng);
    Tensor b = Tensor::randn({4, 1}, rng);
    check_grad([&](std::vector<Tensor>& L) { return l2_loss_sum(matmul(L[0], x), b); },
               {A});
}

TEST_CASE("finite differences across the op set") {
    std::mt19937_64 rng(42);
    auto leaf = [&](std::vector<int64_t> sh) {
        return Tensor::rand_uniform(sh, rng, 0.2, 1.5);
    };
    check_grad([](std::vector<Tensor>& L) { return sum(exp(L[0])); }, {leaf({3, 4})});
    check_grad([](std::vector<Tensor>& L) { return sum(log(L[0])); }, {leaf({5})});
    check_grad([](std::vector<Tensor>& L) { return sum(sqrt(L[0])); }, {leaf({5})});
    check_grad([](std::vector<Tensor>& L) { return sum(tanh(L[0])); }, {leaf({2, 3})});
    check_grad([](std::vector<Tensor>& L) { return sum(sigmoid(L[0])); }, {leaf({4})});
    check_grad([](std::vector<Tensor>& L) { return sum(silu(L[0])); }, {leaf({4})});
    check_grad([](std::vector<Tensor>& L) { return sum(sin(L[0])); }, {leaf({4})});
    check_grad([](std::vector<Tensor>& L) { return sum(cos(L[0])); }, {leaf({4})});
    check_grad([](std::vector<Tensor>& L) { return sum(relu(L[0])); }, {leaf({4})});
    check_grad([](std::vector<Tensor>& L) { return sum(abs(L[0])); }, {leaf({4})});
    check_grad([](std::vector<Tensor>& L) { return sum(softmax_last(L[0])); },
               {leaf({2, 5})});
    check_grad(
        [](std::vector<Tensor>& L) { return sum(mul(softmax_last(L[0]), L[0])); },
        {leaf({2, 5})});
    check_grad([](std::vector<Tensor>& L) { return sum(mul(L[0], L[1])); },
               {leaf({3, 4}), leaf({3, 4})});
    check_grad([](std::vector<Tensor>& L) { return sum(div(L[0], L[1])); },
               {leaf({3}), leaf({3})});
    check_grad([](std::vector<Tensor>& L) { return sum(matmul(L[0], L[1])); },
               {leaf({3, 4}), leaf({4, 2})});
    check_grad([](std::vector<Tensor>& L) { return sum(matmul(L[0], L[1])); },
               {leaf({2, 3, 4}), leaf({2, 4, 2})});
    check_grad(
        [](std::vector<Tensor>& L) { return sum(mul(L[0], L[1])); },
        {leaf({3, 4}), leaf({1, 4})});  // broadcast
    check_grad([](std::vector<Tensor>& L) { return sum(cumsum_exclusive_last(mul(L[0], L[0]))); },
               {leaf({2, 6})});
    check_grad([](std::vector<Tensor>& L) { return sum(sum_axis(mul(L[0], L[0]), 1)); },
               {leaf({2, 3, 2})});
    check_grad(
        [](std::vector<Tensor>& L) {
            return l1_loss_sum(concat({L[0], L[1]}, 0), Tensor::zeros({5, 2}));
        },
        {leaf({2, 2}), leaf({3, 2})});
    check_grad(
        [](std::vector<Tensor>& L) {
            return sum(mul(slice(L[0], 1, 1, 2), transpose2d(slice(L[0], 1, 0, 2))));
        },
        {leaf({2, 4})});
    check_grad(
        [](std::vector<Tensor>& L) {
            return sum(gather_rows(L[0], {0, 2, 2}));
        },
        {leaf({3, 2})});
    check_grad(
        [](std::vector<Tensor>& L) {
            return sum(reshape(mul(L[0], L[0]), {6}));
        },
        {leaf({2, 3})});
}

TEST_CASE("gradient accumulation across multiple uses and backward linearity") {
    std::mt19937_64 rng(3);
    Tensor x = Tensor::randn({4}, rng, 1.0, DType::f64, true);
    Tensor l1 = sum(mul(x, x));
    Tensor l2 = sum(exp(x));
    backward(add(mul_scalar(l1, 2.0), mul_scalar(l2, 3.0)));
    std::vector<double> combined = x.grad();

    x.zero_grad();
    backward(sum(mul(x, x)));
    std::vector<double> g1 = x.grad();
    x.zero_grad();
    backward(sum(exp(x)));
    std::vector<double> g2 = x.grad();
    for (int i = 0; i < 4; ++i)
        CHECK(std::fabs(combined[i] - (2 * g1[i] + 3 * g2[i])) < 1e-10);

    // Accumulation without zero_grad adds gradients.
    Tensor y = Tensor::scalar(2.0);
    y.set_requires_grad(true);
    backward(mul(y, y));
    backward(mul(y, y));
    CHECK(y.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("forward+backward is bit-identical across reruns") {
    auto run = [](DType dt) {
        std::mt19937_64 rng(11);
        Tensor w = Tensor::randn({8, 8}, rng, 1.0, dt, true);
        Tensor x = Tensor::randn({8, 8}, rng, 1.0, dt);
        Tensor loss = sum(silu(matmul(w, x)));
        backward(loss);
        std::vector<double> out = {loss.item()};
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    for (DType dt : {DType::f32, DType::f64}) {
        auto a = run(dt), b = run(dt);
        CHECK(a == b);
    }
}

TEST_CASE("f32 tensors hold float-representable values") {
    std::mt19937_64 rng(5);
    Tensor a = Tensor::randn({16}, rng, 1.0, DType::f32);
    Tensor b = exp(a);
    for (double x : b.data())
        CHECK(x == static_cast<double>(static_cast<float>(x)));
}

TEST_CASE("adam first step and zero-gradient behavior") {
    Tensor p = Tensor::scalar(1.0);
    p.set_requires_grad(true);
    p.node()->ensure_grad();
    p.node()->grad[0] = 1.0;
    std::vector<Tensor> params = {p};
    AdamState st;
    st.lr = 1e-4;
    adam_step(params, st);
    CHECK(p.item() == doctest::Approx(1.0 - 1e-4).epsilon(1e-6));

    // zero gradient leaves parameters unchanged
    Tensor q = Tensor::scalar(0.75);
    q.set_requires_grad(true);
    q.node()->ensure_grad();
    std::vector<Tensor> qs = {q};
    AdamState st2;
    adam_step(qs, st2);
    CHECK(q.item() == 0.75);
}

TEST_CASE("adam skips non-finite gradients and counts the incident") {
    Tensor p = Tensor::scalar(1.0);
    p.set_requires_grad(true);
    p.node()->ensure_grad();
    p.node()->grad[0] = std::nan("");
    std::vector<Tensor> params = {p};
    AdamState st;
    adam_step(params, st);
    CHECK(p.item() == 1.0);
    CHECK(st.skipped == 1);
    CHECK(st.step == 0);
}

TEST_CASE("two adam steps decrease x^2") {
    Tensor x = Tensor::scalar(1.0);
    x.set_requires_grad(true);
    std::vector<Tensor> params = {x};
    AdamState st;
    st.lr = 0.1;
    double f0 = 1.0;
    for (int i = 0; i < 2; ++i) {
        x.zero_grad();
        Tensor loss = mul(x, x);
        backward(loss);
        adam_step(params, st);
    }
    CHECK(x.item() * x.item() < f0);
}

TEST_CASE("checkpoint round-trip is bit exact") {
    std::mt19937_64 rng(9);
    Checkpoint ck;
    ck.entries["weights.w1"] = Tensor::randn({3, 5}, rng, 1.0, DType::f64);
    ck.entries["weights.w2"] = Tensor::randn({7}, rng, 1.0, DType::f32);
    std::string path = "/tmp/fg_test_ckpt.bin";
    ck.save(path);
    Checkpoint lk = Checkpoint::load(path);
    REQUIRE(lk.entries.size() == 2);
    for (const auto& [name, t] : ck.entries) {
        const Tensor& u = lk.entries.at(name);
        CHECK(u.shape() == t.shape());
        CHECK(u.dtype() == t.dtype());
        CHECK(u.data() == t.data());
    }
    std::remove(path.c_str());
}
