// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mgail/autodiff.hpp"
#include "mgail/rng.hpp"

namespace mgail {

using ad::Tensor;

// A named learnable array, the unit the checkpoint file stores.
struct NamedParam {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

std::vector<Tensor> tensors_of(const ParamList& params);
ParamList prefixed(const std::string& prefix, const ParamList& params);
// Deep copy of values into fresh leaves (same names, same shapes).
ParamList clone_params(const ParamList& params);
void copy_values(const ParamList& from, ParamList& to);

enum class Activation { none, tanh, relu };

// Xavier-uniform weight in [in, out].
Tensor init_weight(std::size_t in, std::size_t out, Rng& rng);
Tensor zero_weight(std::size_t in, std::size_t out);
Tensor zero_bias(std::size_t out);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [1, out]

    static Linear make(std::size_t in, std::size_t out, Rng& rng, bool zero_init = false);
    Tensor forward(const Tensor& x) const { return ad::add_bias(ad::matmul(x, weight), bias); }
    std::size_t in() const { return weight.rows(); }
    std::size_t out() const { return weight.cols(); }
    ParamList params(const std::string& name) const;
};

// Stack of dense layers; hidden layers use `act`, the last layer is linear.
struct Mlp {
    std::vector<Linear> layers;
    Activation act = Activation::tanh;

    // sizes = {in, hidden..., out}
    static Mlp make(const std::vector<std::size_t>& sizes, Rng& rng, Activation act, bool zero_last = false);
    Tensor forward(const Tensor& x) const;
    ParamList params(const std::string& name) const;
};

Tensor apply(Activation act, const Tensor& x);

// One-hot rows for a batch of class ids.
Tensor one_hot(const std::vector<std::size_t>& ids, std::size_t classes);

// Stack equally sized vectors into a constant [n, d] matrix.
Tensor stack_rows(const std::vector<std::vector<double>>& rows);

}  // namespace mgail
