#include "fieldgen/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace fieldgen {

namespace {

int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

void round_f32(std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

void finalize(const NodePtr& n) {
    if (n->dtype == DType::f32) round_f32(n->data);
}

DType result_dtype(const Tensor& a, const Tensor& b) {
    return (a.dtype() == DType::f64 && b.dtype() == DType::f64) ? DType::f64
                                                                : DType::f32;
}

[[noreturn]] void shape_error(const std::string& what, const std::vector<int64_t>& a,
                              const std::vector<int64_t>& b) {
    throw std::invalid_argument(what + ": shapes " + shape_str(a) + " vs " +
                                shape_str(b));
}

std::vector<int64_t> broadcast_shape(const std::vector<int64_t>& a,
                                     const std::vector<int64_t>& b) {
    size_t n = std::max(a.size(), b.size());
    std::vector<int64_t> out(n);
    for (size_t i = 0; i < n; ++i) {
        int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1) shape_error("broadcast mismatch", a, b);
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `shape` as seen from an output of `out_shape` (0 where broadcast).
std::vector<int64_t> broadcast_strides(const std::vector<int64_t>& shape,
                                       const std::vector<int64_t>& out_shape) {
    std::vector<int64_t> strides(out_shape.size(), 0);
    int64_t s = 1;
    int off = static_cast<int>(out_shape.size() - shape.size());
    for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
        strides[i + off] = (shape[i] == 1) ? 0 : s;
        s *= shape[i];
    }
    return strides;
}

// Accumulates `g` (laid out as out_shape) into a buffer of `shape`,
// summing over broadcast dimensions.
void reduce_into(const std::vector<double>& g, const std::vector<int64_t>& out_shape,
                 std::vector<double>& dst, const std::vector<int64_t>& shape) {
    if (shape == out_shape) {
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        return;
    }
    std::vector<int64_t> strides = broadcast_strides(shape, out_shape);
    std::vector<int64_t> idx(out_shape.size(), 0);
    int64_t total = numel_of(out_shape);
    for (int64_t flat = 0; flat < total; ++flat) {
        int64_t src = 0;
        for (size_t d = 0; d < out_shape.size(); ++d) src += idx[d] * strides[d];
        dst[src] += g[flat];
        for (int d = static_cast<int>(out_shape.size()) - 1; d >= 0; --d) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }
}

struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A,
          int lda, const double* B, int ldb, double beta, double* C, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, lda, B, ldb,
                beta, C, ldc);
}

}  // namespace

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

void Node::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

// ---- Tensor basics ----

Tensor Tensor::zeros(const std::vector<int64_t>& shape, DType dt, bool rg) {
    return full(shape, 0.0, dt, rg);
}

Tensor Tensor::full(const std::vector<int64_t>& shape, double value, DType dt,
                    bool rg) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->data.assign(numel_of(shape), value);
    n->dtype = dt;
    n->requires_grad = rg;
    finalize(n);
    return Tensor(n);
}

Tensor Tensor::from_data(const std::vector<int64_t>& shape, std::vector<double> v,
                         DType dt, bool rg) {
    if (static_cast<int64_t>(v.size()) != numel_of(shape))
        throw std::invalid_argument("from_data: " + std::to_string(v.size()) +
                                    " values for shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->data = std::move(v);
    n->dtype = dt;
    n->requires_grad = rg;
    finalize(n);
    return Tensor(n);
}

Tensor Tensor::scalar(double value, DType dt) { return full({1}, value, dt, false); }

Tensor Tensor::randn(const std::vector<int64_t>& shape, std::mt19937_64& rng,
                     double stddev, DType dt, bool rg) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(numel_of(shape));
    for (double& x : v) x = dist(rng) * stddev;
    return from_data(shape, std::move(v), dt, rg);
}

Tensor Tensor::rand_uniform(const std::vector<int64_t>& shape, std::mt19937_64& rng,
                            double lo, double hi, DType dt, bool rg) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(numel_of(shape));
    for (double& x : v) x = dist(rng);
    return from_data(shape, std::move(v), dt, rg);
}

const std::vector<int64_t>& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return node_->numel(); }
int64_t Tensor::dim(int i) const { return node_->shape.at(i); }
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }
DType Tensor::dtype() const { return node_->dtype; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
const std::vector<double>& Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::mutable_data() { return node_->data; }
const std::vector<double>& Tensor::grad() const { return node_->grad; }
double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return node_->data[0];
}
double Tensor::at(int64_t flat) const { return node_->data.at(flat); }

Tensor Tensor::detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->data = node_->data;
    n->dtype = node_->dtype;
    return Tensor(n);
}

void Tensor::set_requires_grad(bool b) { node_->requires_grad = b; }

void Tensor::zero_grad() const {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor make_op(std::vector<int64_t> shape, std::vector<double> data,
               std::vector<Tensor> parents, std::function<void(Node&)> backprop,
               DType dt) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->dtype = dt;
    for (const Tensor& p : parents)
        if (p.defined() && p.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    finalize(n);
    return Tensor(n);
}

// ---- backward ----

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss.shape()));
    // Iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    if (loss.node()->requires_grad) stack.push_back({loss.node(), 0});
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].node();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            for (Tensor& p : n->parents)
                if (p.defined() && p.requires_grad()) p.node()->ensure_grad();
            n->backprop(*n);
        }
    }
}

// ---- binary elementwise ----

namespace {

// op(a,b) with dL/da = da_fn(a,b,out)*g and dL/db likewise.
template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb,
                 const char* name) {
    std::vector<int64_t> out_shape = broadcast_shape(a.shape(), b.shape());
    int64_t total = numel_of(out_shape);
    std::vector<double> out(total);
    const auto& ad = a.data();
    const auto& bd = b.data();
    if (a.shape() == b.shape()) {
        for (int64_t i = 0; i < total; ++i) out[i] = f(ad[i], bd[i]);
    } else {
        auto sa = broadcast_strides(a.shape(), out_shape);
        auto sb = broadcast_strides(b.shape(), out_shape);
        std::vector<int64_t> idx(out_shape.size(), 0);
        for (int64_t flat = 0; flat < total; ++flat) {
            int64_t ia = 0, ib = 0;
            for (size_t d = 0; d < out_shape.size(); ++d) {
                ia += idx[d] * sa[d];
                ib += idx[d] * sb[d];
            }
            out[flat] = f(ad[ia], bd[ib]);
            for (int d = static_cast<int>(out_shape.size()) - 1; d >= 0; --d) {
                if (++idx[d] < out_shape[d]) break;
                idx[d] = 0;
            }
        }
    }
    (void)name;
    auto back = [dfa, dfb, out_shape](Node& n) {
        Node* pa = n.parents[0].node();
        Node* pb = n.parents[1].node();
        auto sa = broadcast_strides(pa->shape, out_shape);
        auto sb = broadcast_strides(pb->shape, out_shape);
        int64_t total = n.numel();
        bool same = pa->shape == out_shape && pb->shape == out_shape;
        if (same) {
            for (int64_t i = 0; i < total; ++i) {
                double av = pa->data[i], bv = pb->data[i], g = n.grad[i];
                if (pa->requires_grad) pa->grad[i] += dfa(av, bv, n.data[i]) * g;
                if (pb->requires_grad) pb->grad[i] += dfb(av, bv, n.data[i]) * g;
            }
            return;
        }
        std::vector<int64_t> idx(out_shape.size(), 0);
        for (int64_t flat = 0; flat < total; ++flat) {
            int64_t ia = 0, ib = 0;
            for (size_t d = 0; d < out_shape.size(); ++d) {
                ia += idx[d] * sa[d];
                ib += idx[d] * sb[d];
            }
            double av = pa->data[ia], bv = pb->data[ib], g = n.grad[flat];
            if (pa->requires_grad) pa->grad[ia] += dfa(av, bv, n.data[flat]) * g;
            if (pb->requires_grad) pb->grad[ib] += dfb(av, bv, n.data[flat]) * g;
            for (int d = static_cast<int>(out_shape.size()) - 1; d >= 0; --d) {
                if (++idx[d] < out_shape[d]) break;
                idx[d] = 0;
            }
        }
    };
    return make_op(out_shape, std::move(out), {a, b}, back, result_dtype(a, b));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; },
        [](double, double y, double) { return y; },
        [](double x, double, double) { return x; }, "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x / y; },
        [](double, double y, double) { return 1.0 / y; },
        [](double x, double y, double) { return -x / (y * y); }, "div");
}

// ---- unary ----

namespace {

template <class F, class DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i]);
    auto back = [df](Node& n) {
        Node* p = n.parents[0].node();
        for (int64_t i = 0; i < n.numel(); ++i)
            p->grad[i] += df(p->data[i], n.data[i]) * n.grad[i];
    };
    return make_op(a.shape(), std::move(out), {a}, back, a.dtype());
}

}  // namespace

Tensor neg(const Tensor& a) {
    return unary_op(a, [](double x) { return -x; },
                    [](double, double) { return -1.0; });
}
Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x + s; },
                    [](double, double) { return 1.0; });
}
Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x * s; },
                    [s](double, double) { return s; });
}
Tensor pow_scalar(const Tensor& a, double p) {
    return unary_op(a, [p](double x) { return std::pow(x, p); },
                    [p](double x, double) { return p * std::pow(x, p - 1); });
}
Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}
Tensor log(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}
Tensor sqrt(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}
Tensor tanh(const Tensor& a) {
    return unary_op(a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}
Tensor sigmoid(const Tensor& a) {
    return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double y) { return y * (1.0 - y); });
}
Tensor relu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0 ? x : 0.0; },
                    [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}
Tensor silu(const Tensor& a) {
    return unary_op(a, [](double x) { return x / (1.0 + std::exp(-x)); },
                    [](double x, double) {
                        double s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 + x * (1.0 - s));
                    });
}
Tensor sin(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sin(x); },
                    [](double x, double) { return std::cos(x); });
}
Tensor cos(const Tensor& a) {
    return unary_op(a, [](double x) { return std::cos(x); },
                    [](double x, double) { return -std::sin(x); });
}
Tensor abs(const Tensor& a) {
    return unary_op(a, [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

// ---- shape ops ----

Tensor reshape(const Tensor& a, const std::vector<int64_t>& shape) {
    if (numel_of(shape) != a.numel())
        shape_error("reshape element count mismatch", a.shape(), shape);
    auto back = [](Node& n) {
        Node* p = n.parents[0].node();
        for (int64_t i = 0; i < n.numel(); ++i) p->grad[i] += n.grad[i];
    };
    return make_op(shape, a.data(), {a}, back, a.dtype());
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
    const auto& sh = a.shape();
    if (axis < 0 || axis >= a.ndim() || start < 0 || start + len > sh[axis])
        throw std::invalid_argument("slice: bad range on shape " + shape_str(sh));
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= sh[i];
    for (int i = axis + 1; i < a.ndim(); ++i) inner *= sh[i];
    std::vector<int64_t> out_shape = sh;
    out_shape[axis] = len;
    std::vector<double> out(outer * len * inner);
    const auto& ad = a.data();
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(&out[o * len * inner], &ad[(o * sh[axis] + start) * inner],
                    sizeof(double) * len * inner);
    auto back = [axis, start, len, outer, inner](Node& n) {
        Node* p = n.parents[0].node();
        int64_t ax = p->shape[axis];
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t j = 0; j < len * inner; ++j)
                p->grad[(o * ax + start) * inner + j] += n.grad[o * len * inner + j];
    };
    return make_op(out_shape, std::move(out), {a}, back, a.dtype());
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    auto sh = parts[0].shape();
    int64_t cat = 0;
    DType dt = DType::f64;
    for (const Tensor& p : parts) {
        auto psh = p.shape();
        for (int i = 0; i < static_cast<int>(sh.size()); ++i)
            if (i != axis && psh[i] != sh[i])
                shape_error("concat mismatch", sh, psh);
        cat += psh[axis];
        if (p.dtype() == DType::f32) dt = DType::f32;
    }
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= sh[i];
    for (int i = axis + 1; i < static_cast<int>(sh.size()); ++i) inner *= sh[i];
    std::vector<int64_t> out_shape = sh;
    out_shape[axis] = cat;
    std::vector<double> out(outer * cat * inner);
    int64_t off = 0;
    for (const Tensor& p : parts) {
        int64_t len = p.dim(axis);
        const auto& pd = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(&out[(o * cat + off) * inner], &pd[o * len * inner],
                        sizeof(double) * len * inner);
        off += len;
    }
    auto back = [axis, outer, inner, cat](Node& n) {
        int64_t off = 0;
        for (Tensor& pt : n.parents) {
            Node* p = pt.node();
            int64_t len = p->shape[axis];
            if (pt.requires_grad())
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t j = 0; j < len * inner; ++j)
                        p->grad[o * len * inner + j] +=
                            n.grad[(o * cat + off) * inner + j];
            off += len;
        }
    };
    return make_op(out_shape, std::move(out), parts, back, dt);
}

Tensor transpose2d(const Tensor& a) {
    if (a.ndim() < 2) throw std::invalid_argument("transpose2d: needs >=2 dims");
    auto sh = a.shape();
    int64_t m = sh[a.ndim() - 2], n = sh[a.ndim() - 1];
    int64_t batch = a.numel() / (m * n);
    std::vector<int64_t> out_shape = sh;
    std::swap(out_shape[a.ndim() - 2], out_shape[a.ndim() - 1]);
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
                out[b * m * n + j * m + i] = ad[b * m * n + i * n + j];
    auto back = [m, n, batch](Node& nd) {
        Node* p = nd.parents[0].node();
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j)
                    p->grad[b * m * n + i * n + j] += nd.grad[b * m * n + j * m + i];
    };
    return make_op(out_shape, std::move(out), {a}, back, a.dtype());
}

Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& idx) {
    if (table.ndim() != 2) throw std::invalid_argument("gather_rows: table not 2-D");
    int64_t rows = table.dim(0), width = table.dim(1);
    std::vector<double> out(idx.size() * width);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= rows)
            throw std::invalid_argument("gather_rows: index out of range");
        std::memcpy(&out[i * width], &table.data()[idx[i] * width],
                    sizeof(double) * width);
    }
    auto back = [idx, width](Node& n) {
        Node* p = n.parents[0].node();
        for (size_t i = 0; i < idx.size(); ++i)
            for (int64_t j = 0; j < width; ++j)
                p->grad[idx[i] * width + j] += n.grad[i * width + j];
    };
    return make_op({static_cast<int64_t>(idx.size()), width}, std::move(out),
                   {table}, back, table.dtype());
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
    double s = 0;
    for (double x : a.data()) s += x;
    auto back = [](Node& n) {
        Node* p = n.parents[0].node();
        for (double& g : p->grad) g += n.grad[0];
    };
    return make_op({1}, {s}, {a}, back, a.dtype());
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / a.numel()); }

Tensor sum_axis(const Tensor& a, int axis) {
    const auto& sh = a.shape();
    if (axis < 0 || axis >= a.ndim())
        throw std::invalid_argument("sum_axis: bad axis");
    int64_t outer = 1, inner = 1, ax = sh[axis];
    for (int i = 0; i < axis; ++i) outer *= sh[i];
    for (int i = axis + 1; i < a.ndim(); ++i) inner *= sh[i];
    std::vector<int64_t> out_shape;
    for (int i = 0; i < a.ndim(); ++i)
        if (i != axis) out_shape.push_back(sh[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<double> out(outer * inner, 0.0);
    const auto& ad = a.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t k = 0; k < ax; ++k)
            for (int64_t i = 0; i < inner; ++i)
                out[o * inner + i] += ad[(o * ax + k) * inner + i];
    auto back = [outer, inner, ax](Node& n) {
        Node* p = n.parents[0].node();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t k = 0; k < ax; ++k)
                for (int64_t i = 0; i < inner; ++i)
                    p->grad[(o * ax + k) * inner + i] += n.grad[o * inner + i];
    };
    return make_op(out_shape, std::move(out), {a}, back, a.dtype());
}

Tensor mean_axis(const Tensor& a, int axis) {
    return mul_scalar(sum_axis(a, axis), 1.0 / a.dim(axis));
}

Tensor cumsum_exclusive_last(const Tensor& a) {
    const auto& sh = a.shape();
    int64_t n = sh.back();
    int64_t rows = a.numel() / n;
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    for (int64_t r = 0; r < rows; ++r) {
        double acc = 0;
        for (int64_t i = 0; i < n; ++i) {
            out[r * n + i] = acc;
            acc += ad[r * n + i];
        }
    }
    auto back = [n, rows](Node& nd) {
        Node* p = nd.parents[0].node();
        for (int64_t r = 0; r < rows; ++r) {
            double acc = 0;
            for (int64_t i = n - 1; i >= 0; --i) {
                p->grad[r * n + i] += acc;
                acc += nd.grad[r * n + i];
            }
        }
    };
    return make_op(sh, std::move(out), {a}, back, a.dtype());
}

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() == 2 && b.ndim() == 2) {
        int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
        if (k != k2) shape_error("matmul inner-dim mismatch", a.shape(), b.shape());
        std::vector<double> out(m * n);
        gemm(false, false, m, n, k, 1.0, a.data().data(), k, b.data().data(), n,
             0.0, out.data(), n);
        auto back = [m, n, k](Node& nd) {
            Node* pa = nd.parents[0].node();
            Node* pb = nd.parents[1].node();
            if (pa->requires_grad)
                gemm(false, true, m, k, n, 1.0, nd.grad.data(), n, pb->data.data(),
                     n, 1.0, pa->grad.data(), k);
            if (pb->requires_grad)
                gemm(true, false, k, n, m, 1.0, pa->data.data(), k, nd.grad.data(),
                     n, 1.0, pb->grad.data(), n);
        };
        return make_op({m, n}, std::move(out), {a, b}, back, result_dtype(a, b));
    }
    if (a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0)) {
        int64_t bt = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
        if (k != b.dim(1)) shape_error("matmul inner-dim mismatch", a.shape(), b.shape());
        std::vector<double> out(bt * m * n);
        for (int64_t i = 0; i < bt; ++i)
            gemm(false, false, m, n, k, 1.0, a.data().data() + i * m * k, k,
                 b.data().data() + i * k * n, n, 0.0, out.data() + i * m * n, n);
        auto back = [bt, m, n, k](Node& nd) {
            Node* pa = nd.parents[0].node();
            Node* pb = nd.parents[1].node();
            for (int64_t i = 0; i < bt; ++i) {
                if (pa->requires_grad)
                    gemm(false, true, m, k, n, 1.0, nd.grad.data() + i * m * n, n,
                         pb->data.data() + i * k * n, n, 1.0,
                         pa->grad.data() + i * m * k, k);
                if (pb->requires_grad)
                    gemm(true, false, k, n, m, 1.0, pa->data.data() + i * m * k, k,
                         nd.grad.data() + i * m * n, n, 1.0,
                         pb->grad.data() + i * k * n, n);
            }
        };
        return make_op({bt, m, n}, std::move(out), {a, b}, back,
                       result_dtype(a, b));
    }
    shape_error("matmul: unsupported ranks", a.shape(), b.shape());
}

Tensor softmax_last(const Tensor& a) {
    int64_t n = a.shape().back();
    int64_t rows = a.numel() / n;
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    for (int64_t r = 0; r < rows; ++r) {
        double mx = ad[r * n];
        for (int64_t i = 1; i < n; ++i) mx = std::max(mx, ad[r * n + i]);
        double z = 0;
        for (int64_t i = 0; i < n; ++i) z += std::exp(ad[r * n + i] - mx);
        for (int64_t i = 0; i < n; ++i) out[r * n + i] = std::exp(ad[r * n + i] - mx) / z;
    }
    auto back = [n, rows](Node& nd) {
        Node* p = nd.parents[0].node();
        for (int64_t r = 0; r < rows; ++r) {
            double dot = 0;
            for (int64_t i = 0; i < n; ++i)
                dot += nd.grad[r * n + i] * nd.data[r * n + i];
            for (int64_t i = 0; i < n; ++i)
                p->grad[r * n + i] +=
                    nd.data[r * n + i] * (nd.grad[r * n + i] - dot);
        }
    };
    return make_op(a.shape(), std::move(out), {a}, back, a.dtype());
}

Tensor l1_loss_sum(const Tensor& a, const Tensor& b) { return sum(abs(sub(a, b))); }

Tensor l2_loss_sum(const Tensor& a, const Tensor& b) {
    Tensor d = sub(a, b);
    return sum(mul(d, d));
}

// ---- Adam ----

void adam_step(std::vector<Tensor>& params, AdamState& st) {
    if (st.m.empty()) {
        st.m.resize(params.size());
        st.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            st.m[i].assign(params[i].numel(), 0.0);
            st.v[i].assign(params[i].numel(), 0.0);
        }
    }
    if (st.m.size() != params.size())
        throw std::invalid_argument("adam_step: state/param count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        Node* p = params[i].node();
        p->ensure_grad();
        for (double g : p->grad)
            if (!std::isfinite(g)) {
                ++st.skipped;
                return;
            }
    }
    ++st.step;
    double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Node* p = params[i].node();
        for (size_t j = 0; j < p->data.size(); ++j) {
            double g = p->grad[j];
            st.m[i][j] = st.beta1 * st.m[i][j] + (1 - st.beta1) * g;
            st.v[i][j] = st.beta2 * st.v[i][j] + (1 - st.beta2) * g * g;
            double mh = st.m[i][j] / bc1;
            double vh = st.v[i][j] / bc2;
            p->data[j] -= st.lr * mh / (std::sqrt(vh) + st.eps);
        }
        if (p->dtype == DType::f32) round_f32(p->data);
    }
}

// ---- checkpoint ----

namespace {

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

constexpr char kMagic[8] = {'F', 'G', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint save: cannot open " + path);
    os.write(kMagic, 8);
    write_pod<uint32_t>(os, kFormatVersion);
    write_pod<uint64_t>(os, entries.size());
    for (const auto& [name, t] : entries) {
        write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), name.size());
        write_pod<uint8_t>(os, t.dtype() == DType::f32 ? 0 : 1);
        write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
        for (int64_t d : t.shape()) write_pod<uint64_t>(os, d);
        if (t.dtype() == DType::f32) {
            for (double x : t.data()) write_pod<float>(os, static_cast<float>(x));
        } else {
            os.write(reinterpret_cast<const char*>(t.data().data()),
                     sizeof(double) * t.numel());
        }
    }
    if (!os) throw std::runtime_error("checkpoint save: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint load: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint load: bad magic in " + path);
    uint32_t version = read_pod<uint32_t>(is);
    if (version != kFormatVersion)
        throw std::runtime_error("checkpoint load: unsupported version " +
                                 std::to_string(version));
    Checkpoint ck;
    uint64_t count = read_pod<uint64_t>(is);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t len = read_pod<uint32_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        DType dt = read_pod<uint8_t>(is) == 0 ? DType::f32 : DType::f64;
        uint32_t nd = read_pod<uint32_t>(is);
        std::vector<int64_t> shape(nd);
        for (auto& d : shape) d = static_cast<int64_t>(read_pod<uint64_t>(is));
        std::vector<double> vals(numel_of(shape));
        if (dt == DType::f32) {
            for (double& x : vals) x = static_cast<double>(read_pod<float>(is));
        } else {
            is.read(reinterpret_cast<char*>(vals.data()),
                    sizeof(double) * vals.size());
        }
        ck.entries.emplace(name, Tensor::from_data(shape, std::move(vals), dt));
    }
    if (!is) throw std::runtime_error("checkpoint load: truncated file " + path);
    return ck;
}

}  // namespace fieldgen
