// SPDX-License-Identifier: Apache-2.0
#include "mgail/genmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace mgail {

std::string to_string(Variant v) { return v == Variant::int_cell ? "int" : "ext"; }

Variant parse_variant(const std::string& s) {
    if (s == "int") return Variant::int_cell;
    if (s == "ext") return Variant::ext;
    throw std::invalid_argument("unknown variant '" + s + "' (expected int|ext)");
}

// --- Int cell ------------------------------------------------------------

IntCellParams IntCellParams::make(const GenDims& dims, Rng& rng) {
    const std::size_t ds = dims.state_dim, dz = dims.latent_dim;
    IntCellParams p;
    p.W_f = init_weight(ds, ds, rng);
    p.U_f = init_weight(ds, ds, rng);
    p.b_f = Tensor::full({1, ds}, 2.0, true);  // start close to carrying the state through
    p.W_i = init_weight(ds, ds, rng);
    p.U_i = init_weight(ds, ds, rng);
    p.b_i = zero_bias(ds);
    p.W_a = init_weight(ds, ds, rng);
    p.b_a = zero_bias(ds);
    // W_s starts as [I; R]: identity on the state block, random on the context block.
    Tensor zblock = init_weight(dz, ds, rng);
    std::vector<double> ws((ds + dz) * ds, 0.0);
    for (std::size_t i = 0; i < ds; ++i) ws[i * ds + i] = 1.0;
    std::copy(zblock.value().begin(), zblock.value().end(), ws.begin() + static_cast<std::ptrdiff_t>(ds * ds));
    p.W_s = Tensor::from({ds + dz, ds}, std::move(ws), true);
    p.W_out = zero_weight(ds, dims.actions);
    p.b_out = zero_bias(dims.actions);
    return p;
}

IntCellParams IntCellParams::zeros(const GenDims& dims) {
    const std::size_t ds = dims.state_dim, dz = dims.latent_dim;
    IntCellParams p;
    p.W_f = zero_weight(ds, ds);
    p.U_f = zero_weight(ds, ds);
    p.b_f = zero_bias(ds);
    p.W_i = zero_weight(ds, ds);
    p.U_i = zero_weight(ds, ds);
    p.b_i = zero_bias(ds);
    p.W_a = zero_weight(ds, ds);
    p.b_a = zero_bias(ds);
    p.W_s = zero_weight(ds + dz, ds);
    p.W_out = zero_weight(ds, dims.actions);
    p.b_out = zero_bias(dims.actions);
    return p;
}

ParamList IntCellParams::transition_params() const {
    return {{"W_f", W_f}, {"U_f", U_f}, {"b_f", b_f}, {"W_i", W_i},
            {"U_i", U_i}, {"b_i", b_i}, {"W_s", W_s}};
}

ParamList IntCellParams::policy_params() const {
    return {{"W_a", W_a}, {"b_a", b_a}, {"W_out", W_out}, {"b_out", b_out}};
}

ParamList IntCellParams::params() const {
    ParamList p = transition_params();
    auto q = policy_params();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

IntStep int_step(const Tensor& s, const Tensor& z, const IntCellParams& p) {
    const std::size_t ds = p.W_a.rows();
    if (s.cols() != ds || z.cols() + ds != p.W_s.rows() || s.rows() != z.rows())
        throw ad::ShapeError("int_step: state " + ad::shape_str(s.shape()) + " / context " + ad::shape_str(z.shape()) +
                             " incompatible with cell of width " + std::to_string(ds));
    IntStep out;
    out.a_hidden = ad::tanh(ad::add_bias(ad::matmul(s, p.W_a), p.b_a));
    out.forget = ad::sigmoid(ad::add_bias(ad::add(ad::matmul(out.a_hidden, p.W_f), ad::matmul(s, p.U_f)), p.b_f));
    out.input = ad::sigmoid(ad::add_bias(ad::add(ad::matmul(out.a_hidden, p.W_i), ad::matmul(s, p.U_i)), p.b_i));
    Tensor carried = ad::matmul(ad::concat_cols({s, z}), p.W_s);
    out.s_next = ad::add(ad::mul(out.forget, carried), ad::mul(out.input, out.a_hidden));
    out.logits = ad::add_bias(ad::matmul(out.a_hidden, p.W_out), p.b_out);
    out.probs = ad::softmax(out.logits);
    return out;
}

// --- Ext model -----------------------------------------------------------

ExtModelParams ExtModelParams::make(const GenDims& dims, Rng& rng) {
    ExtModelParams p;
    const std::size_t in = dims.state_dim + dims.actions + dims.latent_dim;
    p.trunk = Mlp::make({in, dims.hidden, dims.hidden}, rng, Activation::tanh);
    p.mean_head = Linear::make(dims.hidden, dims.state_dim, rng, /*zero_init=*/true);
    p.log_var_head = Linear::make(dims.hidden, dims.state_dim, rng, /*zero_init=*/true);
    // start near the observation noise level
    for (auto& b : p.log_var_head.bias.mutable_value()) b = kExtLogVarInit;
    p.policy = Mlp::make({dims.state_dim, dims.hidden, dims.actions}, rng, Activation::tanh, /*zero_last=*/true);
    return p;
}

ParamList ExtModelParams::transition_params() const {
    ParamList out = trunk.params("trunk");
    for (auto part : {mean_head.params("mean"), log_var_head.params("log_var")})
        out.insert(out.end(), part.begin(), part.end());
    return out;
}

ParamList ExtModelParams::policy_params() const { return policy.params("policy"); }

ParamList ExtModelParams::params() const {
    ParamList p = transition_params();
    auto q = policy_params();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

GaussianState ext_transition_heads(const Tensor& s_prev, const Tensor& a_prev, const Tensor& z,
                                   const ExtModelParams& p) {
    Tensor h = ad::tanh(p.trunk.forward(ad::concat_cols({s_prev, a_prev, z})));
    return {ad::add(s_prev, p.mean_head.forward(h)),
            ad::clamp(p.log_var_head.forward(h), kExtLogVarMin, kExtLogVarMax)};
}

// --- behavior policy -----------------------------------------------------

BehaviorPolicy BehaviorPolicy::make(const GenDims& dims, Rng& rng) {
    return {Mlp::make({dims.state_dim, dims.hidden, dims.actions}, rng, Activation::tanh, /*zero_last=*/true)};
}

BcReport bc_fit(BehaviorPolicy& beta, const Dataset& dataset, const BcConfig& cfg) {
    std::vector<Vec> states;
    std::vector<std::size_t> labels;
    for (const auto& t : dataset)
        for (std::size_t i = 0; i < t.horizon(); ++i) {
            states.push_back(t.observations[i]);
            labels.push_back(t.actions[i]);
        }
    if (states.empty()) throw std::invalid_argument("bc_fit: empty dataset");
    const std::size_t classes = beta.net.layers.back().out();
    BcReport rep;
    std::vector<bool> seen(classes, false);
    for (auto a : labels) {
        if (a >= classes) throw std::invalid_argument("bc_fit: action id out of range");
        seen[a] = true;
    }
    for (std::size_t c = 0; c < classes; ++c)
        if (!seen[c]) rep.absent_classes.push_back(c);
    if (!rep.absent_classes.empty())
        spdlog::warn("behavior cloning: {} action classes never appear in the data", rep.absent_classes.size());

    ParamList params = beta.params();
    ad::Adam opt(tensors_of(params), {.lr = cfg.lr});
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(states.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        std::size_t nb = 0;
        for (std::size_t i = 0; i < order.size(); i += bs) {
            std::vector<Vec> xs;
            std::vector<std::size_t> ys;
            for (std::size_t k = i; k < std::min(order.size(), i + bs); ++k) {
                xs.push_back(states[order[k]]);
                ys.push_back(labels[order[k]]);
            }
            Tensor loss = ad::neg(ad::mean(ad::pick(ad::log_softmax(beta.logits(stack_rows(xs))), ys)));
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            total += loss.item();
            ++nb;
        }
        rep.epoch_loss.push_back(total / static_cast<double>(nb));
    }
    Tensor logits = beta.logits(stack_rows(states));
    std::size_t hit = 0;
    for (std::size_t r = 0; r < states.size(); ++r) {
        auto row = logits.value().subspan(r * classes, classes);
        hit += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == labels[r];
    }
    rep.train_accuracy = static_cast<double>(hit) / static_cast<double>(states.size());
    return rep;
}

Vec bc_forward(const BehaviorPolicy& beta, const Vec& s) {
    const Tensor p_t = ad::softmax(beta.logits(Tensor::row(s)));
    auto p = p_t.value();
    return Vec(p.begin(), p.end());
}

// --- GenModel --------------------------------------------------------------

GenModel GenModel::make(Variant variant, const GenDims& dims, Rng& rng) {
    GenModel m;
    m.variant_ = variant;
    m.dims_ = dims;
    if (variant == Variant::int_cell)
        m.int_ = IntCellParams::make(dims, rng);
    else
        m.ext_ = ExtModelParams::make(dims, rng);
    return m;
}

Tensor GenModel::next_state(const Tensor& s_prev, const Tensor& a_prev, const Tensor& z, Rng* noise) const {
    if (int_) return int_step(s_prev, z, *int_).s_next;
    auto heads = ext_transition_heads(s_prev, a_prev, z, *ext_);
    if (!noise) return heads.mean;
    std::vector<double> eps(heads.mean.size());
    for (auto& e : eps) e = noise->normal();
    return ad::reparameterize(heads.mean, heads.log_var, Tensor::from(heads.mean.shape(), std::move(eps)));
}

Tensor GenModel::policy_logits(const Tensor& s) const {
    if (int_) {
        Tensor a_hidden = ad::tanh(ad::add_bias(ad::matmul(s, int_->W_a), int_->b_a));
        return ad::add_bias(ad::matmul(a_hidden, int_->W_out), int_->b_out);
    }
    return ext_->policy.forward(s);
}

Tensor GenModel::readout_logits(const Tensor& s) const {
    if (int_) {
        Tensor a_hidden = ad::tanh(ad::add_bias(ad::matmul(s, int_->W_a), int_->b_a)).detach();
        return ad::add_bias(ad::matmul(a_hidden, int_->W_out), int_->b_out);
    }
    return ext_->policy.forward(s);
}

ParamList GenModel::params() const { return int_ ? int_->params() : ext_->params(); }
ParamList GenModel::transition_params() const { return int_ ? int_->transition_params() : ext_->transition_params(); }
ParamList GenModel::policy_params() const { return int_ ? int_->policy_params() : ext_->policy_params(); }

Vec policy_forward(const GenModel& model, const Vec& s) {
    if (s.size() != model.dims().state_dim)
        throw std::invalid_argument("policy_forward: state dimension " + std::to_string(s.size()));
    const Tensor p_t = ad::softmax(model.policy_logits(Tensor::row(s)));
    auto p = p_t.value();
    return Vec(p.begin(), p.end());
}

Vec ext_transition(const GenModel& model, const Vec& s_prev, std::optional<std::size_t> a_prev,
                   const ContextVariable& z, Rng& rng, RolloutMode mode) {
    if (!model.ext_params()) throw std::invalid_argument("ext_transition: model is not an Ext model");
    const std::size_t m = model.dims().actions;
    std::vector<double> a(m, 0.0);
    if (a_prev) {
        if (*a_prev >= m) throw std::out_of_range("ext_transition: action id out of range");
        a[*a_prev] = 1.0;
    }
    Tensor s = model.next_state(Tensor::row(s_prev), Tensor::row(std::move(a)), Tensor::row(z.z),
                                mode == RolloutMode::sample ? &rng : nullptr);
    return Vec(s.value().begin(), s.value().end());
}

SoftRollout rollout_soft(const GenModel& model, const Tensor& z, std::size_t horizon, Rng* noise) {
    const std::size_t b = z.rows();
    SoftRollout out;
    Tensor s = Tensor::zeros({b, model.dims().state_dim});
    Tensor a = Tensor::zeros({b, model.dims().actions});
    for (std::size_t t = 0; t < horizon; ++t) {
        s = model.next_state(s, a, z, noise);
        Tensor logits = model.policy_logits(s);
        a = ad::softmax(logits);
        out.states.push_back(s);
        out.logits.push_back(logits);
    }
    return out;
}

DiscreteRollout rollout_discrete(const GenModel& model, const Tensor& z, std::size_t horizon,
                                 const ActionChooser& choose, Rng& rng, bool sample_transitions) {
    const std::size_t b = z.rows();
    const Tensor zc = z.detach();
    DiscreteRollout out;
    Tensor s = Tensor::zeros({b, model.dims().state_dim});
    Tensor a = Tensor::zeros({b, model.dims().actions});
    for (std::size_t t = 0; t < horizon; ++t) {
        s = model.next_state(s, a, zc, sample_transitions ? &rng : nullptr).detach();
        auto ids = choose(s, rng);
        a = one_hot(ids, model.dims().actions);
        out.states.push_back(s);
        out.actions.push_back(std::move(ids));
    }
    return out;
}

namespace {

std::vector<std::size_t> choose_from_logits(const Tensor& logits, RolloutMode mode, Rng& rng) {
    Tensor probs = ad::softmax(logits.detach());
    const std::size_t b = probs.rows(), m = probs.cols();
    std::vector<std::size_t> ids(b);
    for (std::size_t r = 0; r < b; ++r) {
        auto row = probs.value().subspan(r * m, m);
        ids[r] = mode == RolloutMode::greedy
                     ? static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())
                     : rng.categorical(row);
    }
    return ids;
}

}  // namespace

ActionChooser policy_chooser(const GenModel& model, RolloutMode mode) {
    return [&model, mode](const Tensor& s, Rng& rng) { return choose_from_logits(model.policy_logits(s), mode, rng); };
}

ActionChooser behavior_chooser(const BehaviorPolicy& beta) {
    return [&beta](const Tensor& s, Rng& rng) { return choose_from_logits(beta.logits(s), RolloutMode::sample, rng); };
}

std::vector<RolloutStep> rollout(const GenModel& model, const ContextVariable& z, std::size_t horizon, Rng& rng,
                                 RolloutMode mode) {
    if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
    if (z.z.size() != model.dims().latent_dim) throw std::invalid_argument("rollout: context dimension mismatch");
    auto r = rollout_discrete(model, Tensor::row(z.z), horizon, policy_chooser(model, mode), rng,
                              mode == RolloutMode::sample);
    std::vector<RolloutStep> out;
    for (std::size_t t = 0; t < horizon; ++t) {
        RolloutStep st;
        st.state.assign(r.states[t].value().begin(), r.states[t].value().end());
        st.action = r.actions[t][0];
        const Tensor p_t = ad::softmax(model.policy_logits(r.states[t]));
        auto p = p_t.value();
        st.probs.assign(p.begin(), p.end());
        out.push_back(std::move(st));
    }
    return out;
}

}  // namespace mgail
