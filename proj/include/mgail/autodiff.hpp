// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors (rank <= 2) with tape-free reverse-mode
// differentiation. Each op result keeps shared ownership of its parents, so
// the computation graph is exactly the set of nodes reachable from the root.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgail::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    // [1, n] row vector.
    static Tensor row(std::vector<double> data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    std::size_t size() const { return node_->value.size(); }

    // Spans alias the node; a temporary Tensor may own the last reference.
    std::span<const double> value() const& { return node_->value; }
    std::span<const double> value() const&& = delete;
    std::span<double> mutable_value() { return node_->value; }
    std::span<const double> grad() const& { return node_->grad; }
    std::span<const double> grad() const&& = delete;
    std::span<double> mutable_grad() { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    const char* op() const { return node_->op; }

    double item() const;
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    // Copy of the value with no graph history.
    Tensor detach() const;
    // Value row r as a fresh [1, cols] constant.
    Tensor row_copy(std::size_t r) const;

    void zero_grad();

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Topologically ordered view of the differentiable part of the graph rooted
// at a tensor: every node appears after all of its parents.
class Graph {
public:
    static Graph trace(const Tensor& root);
    const std::vector<Node*>& nodes() const { return order_; }
    std::size_t size() const { return order_.size(); }

private:
    std::vector<Node*> order_;
};

// Zeroes the grad of every node reachable from root, seeds d(root)=1 and
// accumulates gradients in reverse topological order. Root must be scalar.
void backward(const Tensor& root);

// --- forward ops ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// [n, m] + [1, m], the only implicit broadcast.
Tensor add_bias(const Tensor& a, const Tensor& bias);
// [1, m] -> [n, m]
Tensor expand_rows(const Tensor& a, std::size_t n);
// [n, m] * [n, 1], scaling each row by its own factor.
Tensor scale_rows(const Tensor& a, const Tensor& factors);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// log(sigmoid(a)) without overflow for large |a|.
Tensor log_sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
// Elementwise clamp; gradient passes only strictly inside the interval.
Tensor clamp(const Tensor& a, double lo, double hi);
// Row-wise softmax / log-softmax.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [n, m] -> [n, 1]
Tensor row_sum(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
// out[r] = a[r, index[r]]  ->  [n, 1]
Tensor pick(const Tensor& a, std::span<const std::size_t> index);
// z = mean + exp(log_var / 2) * eps, eps a constant of the same shape.
Tensor reparameterize(const Tensor& mean, const Tensor& log_var, const Tensor& eps);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// --- optimizer -----------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    // Applies one bias-corrected update using the current grads. Tensors whose
    // grad holds a non-finite entry are left untouched; their count is returned.
    std::size_t step();
    void zero_grad();

    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamConfig& config() const { return cfg_; }
    std::size_t steps() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }
    double grad_norm() const;

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace mgail::ad
