// SPDX-License-Identifier: Apache-2.0
//
// Everything a trained planner needs, grouped for checkpointing.
#pragma once

#include <string>

#include "mgail/context.hpp"
#include "mgail/gail.hpp"
#include "mgail/genmodel.hpp"

namespace mgail {

struct ModelDims {
    std::size_t actions = 30;    // M
    std::size_t obs_dim = 40;    // d_o == d_s
    std::size_t latent_dim = 16; // d_z
    std::size_t hidden = 64;
    std::size_t context_hidden = 128;

    ContextDims context() const { return {obs_dim, latent_dim, context_hidden}; }
    GenDims gen() const { return {obs_dim, latent_dim, actions, hidden}; }
    bool operator==(const ModelDims&) const = default;
};

struct ModelBundle {
    ModelDims dims;
    Variant variant = Variant::ext;
    ContextNet context;
    GenModel gen;
    Discriminator disc;
    BehaviorPolicy beta;

    static ModelBundle make(Variant variant, const ModelDims& dims, Rng& rng);
    // Prefixed "context.", "gen.", "disc.", "beta.".
    ParamList params() const;
};

}  // namespace mgail
