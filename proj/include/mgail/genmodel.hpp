// SPDX-License-Identifier: Apache-2.0
//
// Generation model p(a_{1:T}, s_{1:T} | z_c) = prod_t pi(a_t | s_t) T(s_t | z_c, s_{t-1}, a_{t-1})
// with s_0 = 0 and a_0 = 0. Two transition/policy stacks share this interface:
//
//   Int: transition built into a modified LSTM cell (deterministic); the
//        cell's short-term output is the action hidden a_t.
//   Ext: external Gaussian transition network plus a separate policy network.
//
// Nothing here accepts an observation: the goal reaches the rollout only
// through z_c.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mgail/context.hpp"
#include "mgail/nn.hpp"
#include "mgail/taskworld.hpp"

namespace mgail {

enum class Variant { int_cell, ext };
enum class RolloutMode { sample, greedy };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

inline constexpr double kExtLogVarMin = -10.0;
inline constexpr double kExtLogVarMax = 2.0;
inline constexpr double kExtLogVarInit = -6.0;

struct GenDims {
    std::size_t state_dim = 40;  // d_s == d_o
    std::size_t latent_dim = 16;
    std::size_t actions = 30;
    std::size_t hidden = 64;
};

// --- Int cell ------------------------------------------------------------

struct IntCellParams {
    Tensor W_f, U_f, b_f;
    Tensor W_i, U_i, b_i;
    Tensor W_a, b_a;
    Tensor W_s;           // [d_s + d_z, d_s]
    Tensor W_out, b_out;  // [d_s, M]

    static IntCellParams make(const GenDims& dims, Rng& rng);
    static IntCellParams zeros(const GenDims& dims);
    ParamList params() const;
    ParamList transition_params() const;
    ParamList policy_params() const;
};

struct IntStep {
    Tensor a_hidden;  // tanh(s W_a + b_a)
    Tensor forget;    // f_t
    Tensor input;     // i_t
    Tensor logits;
    Tensor probs;
    Tensor s_next;  // f * ([s, z] W_s) + i * a_hidden
};

IntStep int_step(const Tensor& s, const Tensor& z, const IntCellParams& p);

// --- Ext model -----------------------------------------------------------

struct ExtModelParams {
    Mlp trunk;  // [d_s + M + d_z] -> hidden
    Linear mean_head;
    Linear log_var_head;
    Mlp policy;  // d_s -> hidden -> M

    static ExtModelParams make(const GenDims& dims, Rng& rng);
    ParamList params() const;
    ParamList transition_params() const;
    ParamList policy_params() const;
};

struct GaussianState {
    Tensor mean;     // [B, d_s]
    Tensor log_var;  // [B, d_s], clamped
};

// Mean is parameterized as s_prev + delta.
GaussianState ext_transition_heads(const Tensor& s_prev, const Tensor& a_prev, const Tensor& z,
                                   const ExtModelParams& p);

// --- behavior policy -----------------------------------------------------

struct BehaviorPolicy {
    Mlp net;

    static BehaviorPolicy make(const GenDims& dims, Rng& rng);
    Tensor logits(const Tensor& s) const { return net.forward(s); }
    ParamList params() const { return net.params("net"); }
};

struct BcConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    double lr = 3e-3;
    std::uint64_t seed = 0;
};

struct BcReport {
    std::vector<double> epoch_loss;
    double train_accuracy = 0.0;
    std::vector<std::size_t> absent_classes;
};

// Cross-entropy classifier on expert (s_t, a_t) pairs, s_t = observation before a_t.
BcReport bc_fit(BehaviorPolicy& beta, const Dataset& dataset, const BcConfig& cfg);
Vec bc_forward(const BehaviorPolicy& beta, const Vec& s);

// --- generation model ----------------------------------------------------

class GenModel {
public:
    static GenModel make(Variant variant, const GenDims& dims, Rng& rng);

    Variant variant() const { return variant_; }
    const GenDims& dims() const { return dims_; }

    // Batched transition s_{t-1}, a_{t-1} (one-hot or probability rows), z -> s_t.
    // Ext samples with `noise` when given, otherwise returns the mean.
    // The Int cell derives its action input from s_{t-1} itself.
    Tensor next_state(const Tensor& s_prev, const Tensor& a_prev, const Tensor& z, Rng* noise) const;
    Tensor policy_logits(const Tensor& s) const;
    // Same values; on the Int cell gradients stop at the action hidden.
    Tensor readout_logits(const Tensor& s) const;

    ParamList params() const;
    ParamList transition_params() const;
    ParamList policy_params() const;

    IntCellParams* int_params() { return int_ ? &*int_ : nullptr; }
    const IntCellParams* int_params() const { return int_ ? &*int_ : nullptr; }
    ExtModelParams* ext_params() { return ext_ ? &*ext_ : nullptr; }
    const ExtModelParams* ext_params() const { return ext_ ? &*ext_ : nullptr; }

private:
    Variant variant_ = Variant::int_cell;
    GenDims dims_;
    std::optional<IntCellParams> int_;
    std::optional<ExtModelParams> ext_;
};

Vec policy_forward(const GenModel& model, const Vec& s);

// Single-state Ext transition; a_prev = nullopt is the zero action of t = 0.
Vec ext_transition(const GenModel& model, const Vec& s_prev, std::optional<std::size_t> a_prev,
                   const ContextVariable& z, Rng& rng, RolloutMode mode);

// Differentiable rollout feeding each step's action probabilities forward.
struct SoftRollout {
    std::vector<Tensor> states;  // T x [B, d_s]
    std::vector<Tensor> logits;  // T x [B, M]
};
SoftRollout rollout_soft(const GenModel& model, const Tensor& z, std::size_t horizon, Rng* noise);

// Rollout with discrete actions fed forward as one-hot rows.
struct DiscreteRollout {
    std::vector<Tensor> states;                    // T x [B, d_s], constants
    std::vector<std::vector<std::size_t>> actions; // T x B
};

// Picks one action per row given the state batch.
using ActionChooser = std::function<std::vector<std::size_t>(const Tensor& states, Rng& rng)>;
DiscreteRollout rollout_discrete(const GenModel& model, const Tensor& z, std::size_t horizon,
                                 const ActionChooser& choose, Rng& rng, bool sample_transitions);

ActionChooser policy_chooser(const GenModel& model, RolloutMode mode);
ActionChooser behavior_chooser(const BehaviorPolicy& beta);

struct RolloutStep {
    Vec state;
    std::size_t action = 0;
    Vec probs;
};

// Public single-trajectory rollout from (z_c, T) only.
std::vector<RolloutStep> rollout(const GenModel& model, const ContextVariable& z, std::size_t horizon, Rng& rng,
                                 RolloutMode mode);

}  // namespace mgail
