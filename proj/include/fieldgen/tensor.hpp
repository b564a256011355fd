#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fieldgen {

// Storage precision of a tensor. f32 tensors keep every element rounded to
// 32-bit float after each operation; arithmetic itself runs in double.
enum class DType { f32, f64 };

struct Node;
using NodePtr = std::shared_ptr<Node>;

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(const std::vector<int64_t>& shape, DType dt = DType::f64,
                        bool requires_grad = false);
    static Tensor full(const std::vector<int64_t>& shape, double value,
                       DType dt = DType::f64, bool requires_grad = false);
    static Tensor from_data(const std::vector<int64_t>& shape,
                            std::vector<double> values, DType dt = DType::f64,
                            bool requires_grad = false);
    static Tensor scalar(double value, DType dt = DType::f64);
    // N(0, stddev^2) entries.
    static Tensor randn(const std::vector<int64_t>& shape, std::mt19937_64& rng,
                        double stddev = 1.0, DType dt = DType::f64,
                        bool requires_grad = false);
    static Tensor rand_uniform(const std::vector<int64_t>& shape, std::mt19937_64& rng,
                               double lo, double hi, DType dt = DType::f64,
                               bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    Node* node() const { return node_.get(); }
    const NodePtr& node_ptr() const { return node_; }

    const std::vector<int64_t>& shape() const;
    int64_t numel() const;
    int64_t dim(int i) const;
    int ndim() const;
    DType dtype() const;
    bool requires_grad() const;

    const std::vector<double>& data() const;
    std::vector<double>& mutable_data();
    const std::vector<double>& grad() const;  // zero-sized until backward touches it
    double item() const;                      // requires numel()==1
    double at(int64_t flat) const;

    Tensor detach() const;          // same buffer contents, no graph
    void set_requires_grad(bool b); // leaves only
    void zero_grad() const;

private:
    NodePtr node_;
};

struct Node {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // same length as data once touched
    DType dtype = DType::f64;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    // Accumulates into parents' grad buffers given this node's grad.
    std::function<void(Node&)> backprop;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad();
};

// ---- graph execution ----

// Reverse-mode sweep from a scalar loss. Gradients accumulate; call
// zero_grad on parameters between steps.
void backward(const Tensor& loss);

// ---- elementwise / broadcast ops (numpy-style broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor pow_scalar(const Tensor& a, double p);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor abs(const Tensor& a);

// ---- shape ops ----
Tensor reshape(const Tensor& a, const std::vector<int64_t>& shape);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor transpose2d(const Tensor& a);            // 2-D or batched [..,m,n] -> [..,n,m]
Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& idx);

// ---- reductions ----
Tensor sum(const Tensor& a);                    // -> scalar
Tensor mean(const Tensor& a);                   // -> scalar
Tensor sum_axis(const Tensor& a, int axis);     // drops the axis
Tensor mean_axis(const Tensor& a, int axis);
Tensor cumsum_exclusive_last(const Tensor& a);  // prefix sums, last axis, excl.

// ---- contractions ----
// 2-D x 2-D, or batched 3-D x 3-D with matching leading dim.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_last(const Tensor& a);

// ---- losses (element-reduced to a scalar) ----
Tensor l1_loss_sum(const Tensor& a, const Tensor& b);  // sum |a-b|
Tensor l2_loss_sum(const Tensor& a, const Tensor& b);  // sum (a-b)^2

// Custom op escape hatch: result carries explicit parents and backprop.
Tensor make_op(std::vector<int64_t> shape, std::vector<double> data,
               std::vector<Tensor> parents, std::function<void(Node&)> backprop,
               DType dt);

// ---- optimizer ----

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    int64_t skipped = 0;  // steps rejected because of non-finite gradients
    std::vector<std::vector<double>> m, v;
};

// One Adam update over `params` from their .grad buffers. A non-finite
// gradient anywhere skips the whole step and bumps state.skipped.
void adam_step(std::vector<Tensor>& params, AdamState& state);

// ---- named parameter container + checkpoint serialization ----

struct Checkpoint {
    static constexpr uint32_t kFormatVersion = 1;
    std::map<std::string, Tensor> entries;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace fieldgen
