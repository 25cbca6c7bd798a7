// SPDX-License-Identifier: Apache-2.0
#include "mgail/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mgail {

std::vector<Tensor> tensors_of(const ParamList& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
}

ParamList prefixed(const std::string& prefix, const ParamList& params) {
    ParamList out;
    for (const auto& p : params) out.push_back({prefix + "." + p.name, p.tensor});
    return out;
}

ParamList clone_params(const ParamList& params) {
    ParamList out;
    for (const auto& p : params) {
        auto v = p.tensor.value();
        out.push_back({p.name, Tensor::from(p.tensor.shape(), std::vector<double>(v.begin(), v.end()), true)});
    }
    return out;
}

void copy_values(const ParamList& from, ParamList& to) {
    if (from.size() != to.size()) throw std::invalid_argument("copy_values: parameter count mismatch");
    for (std::size_t i = 0; i < from.size(); ++i) {
        auto src = from[i].tensor.value();
        auto dst = to[i].tensor.mutable_value();
        if (src.size() != dst.size()) throw std::invalid_argument("copy_values: size mismatch for " + to[i].name);
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

Tensor init_weight(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    return Tensor::from({in, out}, std::move(w), true);
}

Tensor zero_weight(std::size_t in, std::size_t out) { return Tensor::zeros({in, out}, true); }
Tensor zero_bias(std::size_t out) { return Tensor::zeros({1, out}, true); }

Linear Linear::make(std::size_t in, std::size_t out, Rng& rng, bool zero_init) {
    return Linear{zero_init ? zero_weight(in, out) : init_weight(in, out, rng), zero_bias(out)};
}

ParamList Linear::params(const std::string& name) const { return {{name + ".w", weight}, {name + ".b", bias}}; }

Tensor apply(Activation act, const Tensor& x) {
    switch (act) {
        case Activation::tanh:
            return ad::tanh(x);
        case Activation::relu:
            return ad::relu(x);
        case Activation::none:
            break;
    }
    return x;
}

Mlp Mlp::make(const std::vector<std::size_t>& sizes, Rng& rng, Activation act, bool zero_last) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp::make: need at least input and output sizes");
    Mlp m;
    m.act = act;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        const bool last = i + 2 == sizes.size();
        m.layers.push_back(Linear::make(sizes[i], sizes[i + 1], rng, last && zero_last));
    }
    return m;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h);
        if (i + 1 < layers.size()) h = apply(act, h);
    }
    return h;
}

ParamList Mlp::params(const std::string& name) const {
    ParamList out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto p = layers[i].params(name + "." + std::to_string(i));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

Tensor one_hot(const std::vector<std::size_t>& ids, std::size_t classes) {
    std::vector<double> v(ids.size() * classes, 0.0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= classes) throw std::out_of_range("one_hot: class id out of range");
        v[i * classes + ids[i]] = 1.0;
    }
    return Tensor::from({ids.size(), classes}, std::move(v));
}

Tensor stack_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
    const std::size_t d = rows[0].size();
    std::vector<double> v;
    v.reserve(rows.size() * d);
    for (const auto& r : rows) {
        if (r.size() != d) throw std::invalid_argument("stack_rows: ragged rows");
        v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor::from({rows.size(), d}, std::move(v));
}

}  // namespace mgail
