// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"

using namespace mgail;
using namespace mgail::test;

namespace {

// Weighted sum so every output entry carries a distinct upstream gradient.
Tensor probe(const Tensor& out, const Tensor& w) { return ad::sum(ad::mul(out, w)); }

}  // namespace

TEST_CASE("unary ops match finite differences") {
    Rng rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor(3, 4, rng, 1.0, true);
        Tensor w = random_tensor(3, 4, rng);
        Tensor pos = Tensor::from({3, 4}, to_vec(ad::add_scalar(ad::square(x), 0.5)), true);
        CHECK(max_rel_error([&] { return probe(ad::sigmoid(x), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::log_sigmoid(x), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::tanh(x), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::exp(x), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::square(x), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::log(pos), w); }, {pos}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::softmax(x), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::log_softmax(x), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::scale(ad::neg(x), 2.5), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::add_scalar(x, 3.0), w); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return ad::mean(ad::square(x)); }, {x}) < 1e-6);
        CHECK(max_rel_error([&] { return probe(ad::row_sum(x), ad::slice_cols(w, 0, 1)); }, {x}) < 1e-6);
    }
}

TEST_CASE("relu and clamp away from their kinks") {
    Rng rng(2);
    std::vector<double> v(12);
    for (auto& x : v) {
        x = rng.uniform(0.2, 1.0) * (rng.uniform() < 0.5 ? -1 : 1);
    }
    Tensor x = Tensor::from({3, 4}, v, true);
    Tensor w = random_tensor(3, 4, rng);
    CHECK(max_rel_error([&] { return probe(ad::relu(x), w); }, {x}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::clamp(x, -0.5, 0.5), w); }, {x}) < 1e-6);

    Tensor c = ad::clamp(x, -0.5, 0.5);
    for (double y : c.value()) {
        CHECK(y >= -0.5);
        CHECK(y <= 0.5);
    }
}

TEST_CASE("binary and structural ops match finite differences") {
    Rng rng(3);
    Tensor a = random_tensor(3, 4, rng, 1.0, true);
    Tensor b = random_tensor(4, 2, rng, 1.0, true);
    Tensor c = random_tensor(3, 4, rng, 1.0, true);
    Tensor bias = random_tensor(1, 4, rng, 1.0, true);
    Tensor f = random_tensor(3, 1, rng, 1.0, true);
    Tensor w32 = random_tensor(3, 2, rng);
    Tensor w34 = random_tensor(3, 4, rng);
    Tensor w38 = random_tensor(3, 8, rng);
    Tensor w64 = random_tensor(6, 4, rng);

    CHECK(max_rel_error([&] { return probe(ad::matmul(a, b), w32); }, {a, b}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::add(a, c), w34); }, {a, c}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::sub(a, c), w34); }, {a, c}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::mul(a, c), w34); }, {a, c}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::add_bias(a, bias), w34); }, {a, bias}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::expand_rows(bias, 3), w34); }, {bias}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::scale_rows(a, f), w34); }, {a, f}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::concat_cols({a, c}), w38); }, {a, c}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::concat_rows({a, c}), w64); }, {a, c}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::slice_cols(a, 1, 3), w32); }, {a}) < 1e-6);
    CHECK(max_rel_error([&] { return probe(ad::slice_rows(a, 1, 3), ad::slice_rows(w34, 0, 2)); }, {a}) < 1e-6);
    std::vector<std::size_t> idx{3, 0, 2};
    CHECK(max_rel_error([&] { return probe(ad::pick(a, idx), f); }, {a}) < 1e-6);
}

TEST_CASE("reparameterize is mean + exp(log_var/2) * eps") {
    Rng rng(4);
    Tensor mu = random_tensor(2, 3, rng, 1.0, true);
    Tensor lv = random_tensor(2, 3, rng, 0.5, true);
    Tensor eps = random_tensor(2, 3, rng);
    Tensor z = ad::reparameterize(mu, lv, eps);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(z.value()[i] == doctest::Approx(mu.value()[i] + std::exp(0.5 * lv.value()[i]) * eps.value()[i]));
    Tensor w = random_tensor(2, 3, rng);
    CHECK(max_rel_error([&] { return probe(ad::reparameterize(mu, lv, eps), w); }, {mu, lv}) < 1e-6);
}

TEST_CASE("gradients accumulate over shared subexpressions") {
    Tensor x = Tensor::scalar(1.5, true);
    // y = x*x + x*x*x  ->  dy/dx = 2x + 3x^2
    Tensor sq = ad::mul(x, x);
    Tensor y = ad::add(sq, ad::mul(sq, x));
    ad::backward(y);
    CHECK(x.grad()[0] == doctest::Approx(2 * 1.5 + 3 * 1.5 * 1.5));

    // A second backward restarts from zero rather than adding on.
    ad::backward(y);
    CHECK(x.grad()[0] == doctest::Approx(2 * 1.5 + 3 * 1.5 * 1.5));
}

TEST_CASE("graph trace is topological") {
    Rng rng(5);
    Tensor a = random_tensor(2, 2, rng, 1.0, true);
    Tensor b = ad::tanh(a);
    Tensor c = ad::add(ad::mul(b, a), b);
    Tensor l = ad::sum(c);
    auto g = ad::Graph::trace(l);
    const auto& nodes = g.nodes();
    REQUIRE(!nodes.empty());
    CHECK(nodes.back() == &l.node());
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (const auto& p : nodes[i]->parents) {
            if (!p->requires_grad) continue;
            auto at = std::find(nodes.begin(), nodes.end(), p.get());
            REQUIRE(at != nodes.end());
            CHECK(static_cast<std::size_t>(at - nodes.begin()) < i);
        }
}

TEST_CASE("log_sigmoid stays finite for large inputs") {
    Tensor x = Tensor::row({-800.0, -40.0, 0.0, 40.0, 800.0}, true);
    Tensor y = ad::log_sigmoid(x);
    for (double v : y.value()) CHECK(std::isfinite(v));
    CHECK(y.value()[0] == doctest::Approx(-800.0));
    CHECK(y.value()[2] == doctest::Approx(-std::log(2.0)));
    ad::backward(ad::sum(y));
    for (double g : x.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("shape errors are reported") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(ad::matmul(a, b), ad::ShapeError);
    CHECK_THROWS_AS(ad::add(a, Tensor::zeros({3, 2})), ad::ShapeError);
    CHECK_THROWS_AS(ad::add_bias(a, Tensor::zeros({1, 2})), ad::ShapeError);
    CHECK_THROWS_AS(ad::concat_cols({a, Tensor::zeros({3, 3})}), ad::ShapeError);
    CHECK_THROWS(ad::backward(a));
}

TEST_CASE("adam matches a hand-computed update") {
    Tensor p = Tensor::row({1.0, -2.0}, true);
    ad::Adam opt({p}, {.lr = 0.1});
    double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -2.0};
    for (int t = 1; t <= 3; ++t) {
        opt.zero_grad();
        Tensor loss = ad::sum(ad::square(p));
        ad::backward(loss);
        opt.step();
        for (int i = 0; i < 2; ++i) {
            const double g = 2 * x[i];
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            const double mh = m[i] / (1 - std::pow(0.9, t));
            const double vh = v[i] / (1 - std::pow(0.999, t));
            x[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
        }
        CHECK(p.value()[0] == doctest::Approx(x[0]).epsilon(1e-12));
        CHECK(p.value()[1] == doctest::Approx(x[1]).epsilon(1e-12));
    }
    CHECK(opt.steps() == 3);
}

TEST_CASE("adam leaves tensors with non-finite grads untouched") {
    Tensor p = Tensor::row({1.0, 2.0}, true);
    Tensor q = Tensor::row({3.0}, true);
    ad::Adam opt({p, q}, {.lr = 0.1});
    ad::backward(ad::add(ad::sum(p), ad::sum(q)));
    p.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK(opt.step() == 1);
    CHECK(p.value()[0] == 1.0);
    CHECK(p.value()[1] == 2.0);
    CHECK(q.value()[0] < 3.0);
}

TEST_CASE("lr = 0 leaves parameters unchanged") {
    Rng rng(6);
    Tensor p = random_tensor(3, 3, rng, 1.0, true);
    auto before = to_vec(p);
    ad::Adam opt({p}, {.lr = 0.0});
    ad::backward(ad::sum(ad::square(p)));
    opt.step();
    CHECK(to_vec(p) == before);
}
