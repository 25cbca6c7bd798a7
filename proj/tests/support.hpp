// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers. The finite-difference checker here is the reference
// for every gradient test and is independent of the library's own tooling.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mgail/autodiff.hpp"
#include "mgail/nn.hpp"
#include "mgail/rng.hpp"

namespace mgail::test {

using ad::Tensor;

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0, bool grad = false) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = scale * rng.normal();
    return Tensor::from({r, c}, std::move(v), grad);
}

inline void jitter(const ParamList& params, Rng& rng, double scale = 0.1) {
    for (const auto& p : params) {
        Tensor t = p.tensor;
        for (auto& x : t.mutable_value()) x += scale * rng.normal();
    }
}

// max over entries of |fd - g| / max(floor, |fd| + |g|), central differences.
inline double max_rel_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs,
                            double h = 1e-6, double floor = 1e-6) {
    // stale grads on inputs outside this graph would otherwise leak in
    for (auto t : inputs) t.zero_grad();
    Tensor l = loss();
    ad::backward(l);
    std::vector<std::vector<double>> analytic;
    for (const auto& t : inputs) {
        if (t.has_grad())
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        else
            analytic.emplace_back(t.size(), 0.0);
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor t = inputs[k];
        auto v = t.mutable_value();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + h;
            const double up = loss().item();
            v[i] = keep - h;
            const double down = loss().item();
            v[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double g = analytic[k][i];
            worst = std::max(worst, std::abs(fd - g) / std::max(floor, std::abs(fd) + std::abs(g)));
        }
    }
    return worst;
}

inline double max_rel_error(const std::function<Tensor()>& loss, const ParamList& params) {
    return max_rel_error(loss, tensors_of(params));
}

inline std::vector<double> to_vec(const Tensor& t) { return {t.value().begin(), t.value().end()}; }

}  // namespace mgail::test
