// SPDX-License-Identifier: Apache-2.0
//
// Joint adversarial training of discriminator D, transition T and policy pi.
// Per batch of expert trajectories, one step each in the order D -> T -> pi:
//
//   D:  descend  -E_expert[log D(s^E, a^E)] - E_gen[log(1 - D(s, a))]
//   T:  descend   E[log(1 - D(T(s_{t-1}, a_{t-1}, z), a^E_t))] + w * |T(...) - s^E_t|^2
//   pi: descend  -E_beta[clip(pi/beta) * log pi(a|s) * (Q - b)] - lambda * H(pi)
//
// plus a supervised sequence term (cross-entropy of pi against a^E_t on the
// generated states) in both generator steps. Q is the discounted Monte-Carlo
// return of r = log D along a rollout whose actions come from beta.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgail/context.hpp"
#include "mgail/genmodel.hpp"

namespace mgail {

struct Discriminator {
    Mlp net;  // [d_s + M] -> hidden -> hidden -> 1

    static Discriminator make(const GenDims& dims, Rng& rng);
    Tensor logits(const Tensor& s, const Tensor& a) const;
    ParamList params() const { return net.params("net"); }
};

struct DiscOutput {
    double prob = 0.5;
    double reward = 0.0;  // log D
};

DiscOutput disc_forward(const Discriminator& d, const Vec& s, const Vec& a_repr);

struct Ablations {
    bool no_reward = false;
    bool no_disc = false;
    bool no_her = false;

    // "no_reward,no_disc" style list; empty string for none.
    static Ablations parse(const std::string& list);
    std::string tag() const;
    bool operator==(const Ablations&) const = default;
};

enum class ContextSource { mean, sample };

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    double lr_disc = 1e-3;
    double lr_transition = 3e-3;
    double lr_policy = 3e-3;
    double entropy_weight = 0.01;  // lambda
    double reward_weight = 0.2;    // scales the policy-gradient term
    double discount = 0.99;        // gamma
    double clip_lo = 0.1;
    double clip_hi = 10.0;
    double distance_weight = 1.0;
    double sequence_weight = 1.0;
    ContextSource context = ContextSource::mean;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainEpoch {
    std::size_t epoch = 0;
    double loss_disc = 0.0;
    double loss_transition = 0.0;
    double loss_policy = 0.0;
    double mean_reward = 0.0;
    double entropy = 0.0;
    double grad_norm_disc = 0.0;
    double grad_norm_transition = 0.0;
    double grad_norm_policy = 0.0;
    double disc_expert = 0.0;     // mean D on expert pairs
    double disc_generated = 0.0;  // mean D on generated pairs
    double sequence_ce = 0.0;
    double distance = 0.0;
    std::size_t ratio_clamp_events = 0;  // beta(a|s) < 1e-8
    std::size_t skipped_updates = 0;
    double q_recursion_max_error = 0.0;
};

struct TrainReport {
    std::vector<TrainEpoch> epochs;
    bool diverged = false;
};

std::string train_epoch_json(const TrainEpoch& e);

// --- pieces exposed for verification -------------------------------------

inline constexpr double kBehaviorFloor = 1e-8;

// Q_t = r_t + gamma * Q_{t+1}, Q_{T+1} = 0.
std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma);
// max_t |Q_t - (r_t + gamma Q_{t+1})|
double q_recursion_error(const std::vector<double>& rewards, const std::vector<double>& q, double gamma);
double categorical_entropy(std::span<const double> probs);

struct RatioResult {
    double ratio = 1.0;
    bool floored = false;  // beta below kBehaviorFloor
};
// clip(pi / max(beta, floor), lo, hi)
RatioResult importance_ratio(double pi, double beta, double lo, double hi);

// Expert side of one batch, all trajectories of equal horizon.
struct ExpertBatch {
    Tensor z;                                    // [B, d_z] constant
    std::vector<Tensor> states;                  // T x [B, d_s]: observation before each action
    std::vector<std::vector<std::size_t>> actions;  // T x B
    Tensor goal;                                 // [B, d_s] observation after the last action
    std::size_t horizon() const { return states.size(); }
    std::size_t size() const { return z.rows(); }
};

ExpertBatch make_expert_batch(const std::vector<const Trajectory*>& batch, const ContextNet& context,
                              ContextSource source, Rng& rng);

// -(mean log D(expert) + mean log(1 - D(generated))) on stacked (state, action-repr) rows.
Tensor disc_loss(const Discriminator& d, const Tensor& s_expert, const Tensor& a_expert, const Tensor& s_gen,
                 const Tensor& a_gen);

// T + 1 one-step predictions T(s^E_{t-1}, a^E_{t-1}, z) from expert inputs,
// starting at (0, 0) and ending at the goal.
std::vector<Tensor> one_step_predictions(const GenModel& model, const ExpertBatch& expert, Rng* noise);

struct GeneratorLosses {
    Tensor total;
    Tensor adversarial;  // mean log(1 - D(T(s^E_{t-1}, a^E_{t-1}), a^E_t)); undefined under no_disc
    Tensor one_step;     // mean |T(s^E_{t-1}, a^E_{t-1}) - s^E_t|^2, goal included
    Tensor distance;     // mean over (b, t) of |s_t - s^E_t|^2 along the free rollout
    Tensor sequence;     // mean cross-entropy of pi(.|s_t) against a^E_t on the rollout
};

GeneratorLosses transition_loss(const GenModel& model, const SoftRollout& gen, const ExpertBatch& expert,
                                const Discriminator& d, const TrainConfig& cfg, const Ablations& ab, Rng* noise);

struct PolicyLosses {
    Tensor total;
    double pg = 0.0;
    double entropy = 0.0;
    double mean_reward = 0.0;
    double sequence = 0.0;
    std::size_t clamp_events = 0;
    double q_recursion_error = 0.0;
    double ratio_min = 1.0;
    double ratio_max = 1.0;
};

PolicyLosses policy_loss(const GenModel& model, const SoftRollout& gen, const DiscreteRollout& behavior_rollout,
                         const ExpertBatch& expert, const BehaviorPolicy& beta, const Discriminator& d,
                         const TrainConfig& cfg, const Ablations& ab);

// --- update steps ----------------------------------------------------------

struct Optimizers {
    ad::Adam disc;
    ad::Adam transition;
    ad::Adam policy;
};

Optimizers make_optimizers(GenModel& model, Discriminator& d, const TrainConfig& cfg);

struct StepStats {
    double loss = 0.0;
    double grad_norm = 0.0;
    bool finite = true;
    std::size_t skipped = 0;
};

// Generated side: a rollout with actions sampled from pi.
StepStats disc_update(Discriminator& d, ad::Adam& opt, const ExpertBatch& expert, const DiscreteRollout& gen,
                      std::size_t actions);
StepStats transition_update(GenModel& model, ad::Adam& opt, const ExpertBatch& expert, const Discriminator& d,
                            const TrainConfig& cfg, const Ablations& ab, Rng& rng, GeneratorLosses* out = nullptr);
StepStats policy_update(GenModel& model, ad::Adam& opt, const ExpertBatch& expert, const BehaviorPolicy& beta,
                        const Discriminator& d, const TrainConfig& cfg, const Ablations& ab, Rng& rng,
                        PolicyLosses* out = nullptr);

// Full loop over the dataset (context frozen, beta already fitted). Rolls
// back to the last finite epoch if any loss turns non-finite.
TrainReport train_gail(GenModel& model, Discriminator& d, const BehaviorPolicy& beta, const ContextNet& context,
                       const Dataset& dataset, const TrainConfig& cfg, const Ablations& ab);

}  // namespace mgail
