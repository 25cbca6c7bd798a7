// SPDX-License-Identifier: Apache-2.0
//
// Predictive VAE over (start, goal) observation pairs. Two parallel encoders
// feed a shared fusion layer that parameterizes a diagonal Gaussian over the
// context variable; the decoder reconstructs both observations from it.
#pragma once

#include <cstdint>
#include <vector>

#include "mgail/nn.hpp"
#include "mgail/taskworld.hpp"

namespace mgail {

inline constexpr double kContextLogVarMin = -10.0;
inline constexpr double kContextLogVarMax = 10.0;

struct ContextPosterior {
    Vec mean;
    Vec log_var;
};

struct ContextVariable {
    Vec z;
};

struct ContextDims {
    std::size_t obs_dim = 40;
    std::size_t latent_dim = 16;
    std::size_t hidden = 64;
};

// Batched posterior heads; log_var already clamped.
struct PosteriorHeads {
    Tensor mean;     // [B, d_z]
    Tensor log_var;  // [B, d_z]
};

class ContextNet {
public:
    static ContextNet make(const ContextDims& dims, Rng& rng);

    const ContextDims& dims() const { return dims_; }

    PosteriorHeads encode_batch(const Tensor& start, const Tensor& goal) const;
    // [B, d_z] -> [B, 2 * d_o]: reconstructed start followed by goal.
    Tensor decode_batch(const Tensor& z) const;

    ContextPosterior encode(const Vec& start, const Vec& goal) const;

    ParamList params() const;

private:
    ContextDims dims_;
    Mlp enc_start_;
    Mlp enc_goal_;
    Linear fusion_;
    Linear mean_head_;
    Linear log_var_head_;
    Mlp decoder_;
};

ContextVariable sample_context(const ContextPosterior& post, Rng& rng);
ContextVariable posterior_mean(const ContextPosterior& post);

// Closed-form KL(N(mean, exp(log_var)) || N(0, I)).
double gaussian_kl(const Vec& mean, const Vec& log_var);

struct ObsPair {
    Vec start;
    Vec goal;
};

struct ElboTerms {
    Tensor loss;  // negated ELBO, batch mean
    double reconstruction = 0.0;
    double goal_reconstruction = 0.0;
    double kl = 0.0;
    double min_kl = 0.0;  // smallest per-sample KL in the batch
};

ElboTerms elbo_loss(const ContextNet& net, const std::vector<ObsPair>& batch, Rng& rng);

struct ContextTrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct ContextEpoch {
    std::size_t epoch = 0;
    double loss = 0.0;
    double reconstruction = 0.0;
    double goal_reconstruction = 0.0;
    double kl = 0.0;
    double min_kl = 0.0;
};

struct ContextTrainReport {
    std::vector<ContextEpoch> curve;
    bool diverged = false;
};

std::vector<ObsPair> endpoint_pairs(const Dataset& dataset);

// Adam on the negated ELBO. On a non-finite epoch loss the parameters are
// rolled back to the last finite epoch and training stops.
ContextTrainReport train_context(ContextNet& net, const Dataset& dataset, const ContextTrainConfig& cfg);

}  // namespace mgail
