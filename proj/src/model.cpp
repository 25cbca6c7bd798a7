// SPDX-License-Identifier: Apache-2.0
#include "mgail/model.hpp"

namespace mgail {

ModelBundle ModelBundle::make(Variant variant, const ModelDims& dims, Rng& rng) {
    Rng r_ctx = rng.split(1), r_gen = rng.split(2), r_disc = rng.split(3), r_beta = rng.split(4);
    return ModelBundle{dims,
                       variant,
                       ContextNet::make(dims.context(), r_ctx),
                       GenModel::make(variant, dims.gen(), r_gen),
                       Discriminator::make(dims.gen(), r_disc),
                       BehaviorPolicy::make(dims.gen(), r_beta)};
}

ParamList ModelBundle::params() const {
    ParamList out;
    for (auto part : {prefixed("context", context.params()), prefixed("gen", gen.params()),
                      prefixed("disc", disc.params()), prefixed("beta", beta.params())})
        out.insert(out.end(), part.begin(), part.end());
    return out;
}

}  // namespace mgail
