// SPDX-License-Identifier: Apache-2.0
#include "mgail/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mgail::ad {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

namespace {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b, const char* why = "") {
    std::ostringstream os;
    os << op << ": shape mismatch " << shape_str(a) << " vs " << shape_str(b);
    if (*why) os << " (" << why << ")";
    throw ShapeError(os.str());
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const char* why) {
    std::ostringstream os;
    os << op << ": invalid shape " << shape_str(a) << " (" << why << ")";
    throw ShapeError(os.str());
}

void require_matrix(const char* op, const Tensor& a) {
    if (a.rank() != 2) shape_fail(op, a.shape(), "expected rank 2");
}

using BackFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> value, const char* op, std::vector<std::shared_ptr<Node>> parents,
                   BackFn fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return Tensor(std::move(n));
}

// Elementwise unary op with derivative expressed through (input, output).
template <class F, class D>
Tensor unary(const char* op, const Tensor& a, F f, D dfdx) {
    std::vector<double> out(a.size());
    auto av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    return make_result(a.shape(), std::move(out), op, {a.node_ptr()}, [dfdx](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < self.value.size(); ++i) p.grad[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
    });
}

}  // namespace

// --- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape.empty() || shape.size() > 2) shape_fail("from", shape, "rank must be 1 or 2");
    if (numel(shape) != data.size()) {
        std::ostringstream os;
        os << "from: shape " << shape_str(shape) << " needs " << numel(shape) << " values, got " << data.size();
        throw ShapeError(os.str());
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->value.size(), 0.0);
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1, 1}, {v}, requires_grad); }

Tensor Tensor::row(std::vector<double> data, bool requires_grad) {
    const std::size_t n = data.size();
    return from({1, n}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }
std::size_t Tensor::cols() const { return rank() == 2 ? shape()[1] : shape()[0]; }

double Tensor::item() const {
    if (size() != 1) shape_fail("item", shape(), "tensor is not a scalar");
    return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor Tensor::row_copy(std::size_t r) const {
    const std::size_t c = cols();
    std::vector<double> v(node_->value.begin() + static_cast<std::ptrdiff_t>(r * c),
                          node_->value.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
    return from({1, c}, std::move(v));
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

// --- Graph / backward ------------------------------------------------------

Graph Graph::trace(const Tensor& root) {
    Graph g;
    if (!root.requires_grad()) return g;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
    seen.insert(&root.node());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            g.order_.push_back(n);
            stack.pop_back();
        }
    }
    return g;
}

void backward(const Tensor& root) {
    if (root.size() != 1) shape_fail("backward", root.shape(), "root must be a scalar");
    if (!root.requires_grad()) return;
    Graph g = Graph::trace(root);
    for (Node* n : g.nodes()) n->grad.assign(n->value.size(), 0.0);
    root.node().grad[0] = 1.0;
    const auto& order = g.nodes();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// --- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) shape_fail("matmul", a.shape(), b.shape(), "inner dimensions differ");
    std::vector<double> out(n * m, 0.0);
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < n; ++i) {
        double* o = &out[i * m];
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            const double* br = &bv[p * m];
            for (std::size_t j = 0; j < m; ++j) o[j] += x * br[j];
        }
    }
    return make_result({n, m}, std::move(out), "matmul", {a.node_ptr(), b.node_ptr()}, [n, k, m](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        const double* g = self.grad.data();
        if (A.requires_grad) {
            // dA = G * B^T
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    const double* br = &B.value[p * m];
                    const double* gr = &g[i * m];
                    for (std::size_t j = 0; j < m; ++j) s += gr[j] * br[j];
                    A.grad[i * k + p] += s;
                }
        }
        if (B.requires_grad) {
            // dB = A^T * G
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = A.value[i * k + p];
                    if (x == 0.0) continue;
                    double* bg = &B.grad[p * m];
                    const double* gr = &g[i * m];
                    for (std::size_t j = 0; j < m; ++j) bg[j] += x * gr[j];
                }
        }
    });
}

namespace {

template <class F, class DA, class DB>
Tensor binary_same(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
    if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
    std::vector<double> out(a.size());
    auto av = a.value();
    auto bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    return make_result(a.shape(), std::move(out), op, {a.node_ptr(), b.node_ptr()}, [da, db](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            if (A.requires_grad) A.grad[i] += self.grad[i] * da(A.value[i], B.value[i]);
            if (B.requires_grad) B.grad[i] += self.grad[i] * db(A.value[i], B.value[i]);
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_same(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_same(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_same(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    require_matrix("add_bias", a);
    const std::size_t n = a.rows(), m = a.cols();
    if (bias.size() != m || bias.rows() != 1) shape_fail("add_bias", a.shape(), bias.shape(), "bias must be [1, cols]");
    std::vector<double> out(a.value().begin(), a.value().end());
    auto bv = bias.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bv[j];
    return make_result(a.shape(), std::move(out), "add_bias", {a.node_ptr(), bias.node_ptr()}, [n, m](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        if (A.requires_grad)
            for (std::size_t i = 0; i < n * m; ++i) A.grad[i] += self.grad[i];
        if (B.requires_grad)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) B.grad[j] += self.grad[i * m + j];
    });
}

Tensor expand_rows(const Tensor& a, std::size_t n) {
    if (a.rows() != 1) shape_fail("expand_rows", a.shape(), "expected a single row");
    const std::size_t m = a.cols();
    std::vector<double> out(n * m);
    auto av = a.value();
    for (std::size_t i = 0; i < n; ++i) std::copy(av.begin(), av.end(), out.begin() + static_cast<std::ptrdiff_t>(i * m));
    return make_result({n, m}, std::move(out), "expand_rows", {a.node_ptr()}, [n, m](Node& self) {
        Node& A = *self.parents[0];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) A.grad[j] += self.grad[i * m + j];
    });
}

Tensor scale_rows(const Tensor& a, const Tensor& factors) {
    require_matrix("scale_rows", a);
    const std::size_t n = a.rows(), m = a.cols();
    if (factors.size() != n) shape_fail("scale_rows", a.shape(), factors.shape(), "need one factor per row");
    std::vector<double> out(n * m);
    auto av = a.value();
    auto fv = factors.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = av[i * m + j] * fv[i];
    return make_result(a.shape(), std::move(out), "scale_rows", {a.node_ptr(), factors.node_ptr()},
                       [n, m](Node& self) {
                           Node& A = *self.parents[0];
                           Node& F = *self.parents[1];
                           for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < m; ++j) {
                                   const double g = self.grad[i * m + j];
                                   if (A.requires_grad) A.grad[i * m + j] += g * F.value[i];
                                   if (F.requires_grad) F.grad[i] += g * A.value[i * m + j];
                               }
                       });
}

Tensor scale(const Tensor& a, double s) {
    return unary(
        "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(
        "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& a) {
    return unary(
        "log_sigmoid", a,
        [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
        [](double x, double) {
            // 1 - sigmoid(x)
            if (x >= 0) {
                const double e = std::exp(-x);
                return e / (1.0 + e);
            }
            return 1.0 / (1.0 + std::exp(x));
        });
}

Tensor tanh(const Tensor& a) {
    return unary(
        "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
    return unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary(
        "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a) {
    require_matrix("softmax", a);
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n * m);
    auto av = a.value();
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = &av[i * m];
        const double mx = *std::max_element(x, x + m);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) z += (out[i * m + j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
    }
    return make_result(a.shape(), std::move(out), "softmax", {a.node_ptr()}, [n, m](Node& self) {
        Node& A = *self.parents[0];
        for (std::size_t i = 0; i < n; ++i) {
            const double* y = &self.value[i * m];
            const double* g = &self.grad[i * m];
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < m; ++j) A.grad[i * m + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor log_softmax(const Tensor& a) {
    require_matrix("log_softmax", a);
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n * m);
    auto av = a.value();
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = &av[i * m];
        const double mx = *std::max_element(x, x + m);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) z += std::exp(x[j] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x[j] - lz;
    }
    return make_result(a.shape(), std::move(out), "log_softmax", {a.node_ptr()}, [n, m](Node& self) {
        Node& A = *self.parents[0];
        for (std::size_t i = 0; i < n; ++i) {
            const double* y = &self.value[i * m];
            const double* g = &self.grad[i * m];
            double gs = 0.0;
            for (std::size_t j = 0; j < m; ++j) gs += g[j];
            for (std::size_t j = 0; j < m; ++j) A.grad[i * m + j] += g[j] - std::exp(y[j]) * gs;
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.value()) s += x;
    return make_result({1, 1}, {s}, "sum", {a.node_ptr()}, [](Node& self) {
        Node& A = *self.parents[0];
        for (double& g : A.grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) shape_fail("mean", a.shape(), "empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(const Tensor& a) {
    require_matrix("row_sum", a);
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n, 0.0);
    auto av = a.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += av[i * m + j];
    return make_result({n, 1}, std::move(out), "row_sum", {a.node_ptr()}, [n, m](Node& self) {
        Node& A = *self.parents[0];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) A.grad[i * m + j] += self.grad[i];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t n = parts[0].rows();
    std::size_t m = 0;
    std::vector<std::size_t> offsets;
    std::vector<std::shared_ptr<Node>> parents;
    for (const auto& p : parts) {
        if (p.rows() != n) shape_fail("concat_cols", parts[0].shape(), p.shape(), "row counts differ");
        offsets.push_back(m);
        m += p.cols();
        parents.push_back(p.node_ptr());
    }
    std::vector<double> out(n * m);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t c = parts[k].cols();
        auto pv = parts[k].value();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * m + offsets[k] + j] = pv[i * c + j];
    }
    return make_result({n, m}, std::move(out), "concat_cols", std::move(parents), [n, m, offsets](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            Node& P = *self.parents[k];
            if (!P.requires_grad) continue;
            const std::size_t c = P.value.size() / n;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) P.grad[i * c + j] += self.grad[i * m + offsets[k] + j];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t m = parts[0].cols();
    std::size_t n = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::vector<double> out;
    for (const auto& p : parts) {
        if (p.cols() != m) shape_fail("concat_rows", parts[0].shape(), p.shape(), "column counts differ");
        n += p.rows();
        out.insert(out.end(), p.value().begin(), p.value().end());
        parents.push_back(p.node_ptr());
    }
    return make_result({n, m}, std::move(out), "concat_rows", std::move(parents), [](Node& self) {
        std::size_t off = 0;
        for (auto& pp : self.parents) {
            Node& P = *pp;
            if (P.requires_grad)
                for (std::size_t i = 0; i < P.value.size(); ++i) P.grad[i] += self.grad[off + i];
            off += P.value.size();
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    require_matrix("slice_cols", a);
    const std::size_t n = a.rows(), m = a.cols();
    if (begin > end || end > m) shape_fail("slice_cols", a.shape(), "column range out of bounds");
    const std::size_t w = end - begin;
    std::vector<double> out(n * w);
    auto av = a.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * m + begin + j];
    return make_result({n, w}, std::move(out), "slice_cols", {a.node_ptr()}, [n, m, w, begin](Node& self) {
        Node& A = *self.parents[0];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) A.grad[i * m + begin + j] += self.grad[i * w + j];
    });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    require_matrix("slice_rows", a);
    const std::size_t n = a.rows(), m = a.cols();
    if (begin > end || end > n) shape_fail("slice_rows", a.shape(), "row range out of bounds");
    std::vector<double> out(a.value().begin() + static_cast<std::ptrdiff_t>(begin * m),
                            a.value().begin() + static_cast<std::ptrdiff_t>(end * m));
    return make_result({end - begin, m}, std::move(out), "slice_rows", {a.node_ptr()}, [m, begin](Node& self) {
        Node& A = *self.parents[0];
        for (std::size_t i = 0; i < self.value.size(); ++i) A.grad[begin * m + i] += self.grad[i];
    });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
    require_matrix("pick", a);
    const std::size_t n = a.rows(), m = a.cols();
    if (index.size() != n) shape_fail("pick", a.shape(), Shape{index.size()}, "need one index per row");
    std::vector<double> out(n);
    std::vector<std::size_t> idx(index.begin(), index.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (idx[i] >= m) shape_fail("pick", a.shape(), "index out of range");
        out[i] = a.value()[i * m + idx[i]];
    }
    return make_result({n, 1}, std::move(out), "pick", {a.node_ptr()}, [m, idx](Node& self) {
        Node& A = *self.parents[0];
        for (std::size_t i = 0; i < idx.size(); ++i) A.grad[i * m + idx[i]] += self.grad[i];
    });
}

Tensor reparameterize(const Tensor& mean, const Tensor& log_var, const Tensor& eps) {
    if (mean.shape() != log_var.shape()) shape_fail("reparameterize", mean.shape(), log_var.shape());
    if (mean.shape() != eps.shape()) shape_fail("reparameterize", mean.shape(), eps.shape(), "noise shape");
    std::vector<double> out(mean.size());
    auto mv = mean.value();
    auto lv = log_var.value();
    auto ev = eps.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mv[i] + std::exp(0.5 * lv[i]) * ev[i];
    return make_result(mean.shape(), std::move(out), "reparameterize",
                       {mean.node_ptr(), log_var.node_ptr(), eps.node_ptr()}, [](Node& self) {
                           Node& M = *self.parents[0];
                           Node& L = *self.parents[1];
                           Node& E = *self.parents[2];
                           for (std::size_t i = 0; i < self.value.size(); ++i) {
                               const double g = self.grad[i];
                               const double sd = std::exp(0.5 * L.value[i]);
                               if (M.requires_grad) M.grad[i] += g;
                               if (L.requires_grad) L.grad[i] += g * 0.5 * sd * E.value[i];
                               if (E.requires_grad) E.grad[i] += g * sd;
                           }
                       });
}

// --- Adam ----------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) {
        if (!p.requires_grad()) throw std::invalid_argument("Adam: parameter without requires_grad");
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
        if (!p.has_grad()) p.zero_grad();
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double Adam::grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_)
        for (double g : p.grad()) s += g * g;
    return std::sqrt(s);
}

std::size_t Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t skipped = 0;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        auto g = p.grad();
        if (std::any_of(g.begin(), g.end(), [](double x) { return !std::isfinite(x); })) {
            ++skipped;
            continue;
        }
        auto w = p.mutable_value();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            w[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
    return skipped;
}

}  // namespace mgail::ad
