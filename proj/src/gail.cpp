// SPDX-License-Identifier: Apache-2.0
#include "mgail/gail.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "json.hpp"

namespace mgail {

// --- discriminator -----------------------------------------------------------

Discriminator Discriminator::make(const GenDims& dims, Rng& rng) {
    return {Mlp::make({dims.state_dim + dims.actions, dims.hidden, dims.hidden, 1}, rng, Activation::tanh,
                      /*zero_last=*/true)};
}

Tensor Discriminator::logits(const Tensor& s, const Tensor& a) const { return net.forward(ad::concat_cols({s, a})); }

DiscOutput disc_forward(const Discriminator& d, const Vec& s, const Vec& a_repr) {
    const double l = d.logits(Tensor::row(s), Tensor::row(a_repr)).item();
    DiscOutput out;
    out.prob = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
    out.reward = ad::log_sigmoid(Tensor::scalar(l)).item();
    return out;
}

// --- ablations / config ------------------------------------------------------

Ablations Ablations::parse(const std::string& list) {
    Ablations a;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (item.empty()) continue;
        if (item == "no_reward")
            a.no_reward = true;
        else if (item == "no_disc")
            a.no_disc = true;
        else if (item == "no_her")
            a.no_her = true;
        else
            throw std::invalid_argument("unknown ablation '" + item + "' (expected no_reward|no_disc|no_her)");
    }
    return a;
}

std::string Ablations::tag() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += ',';
        out += name;
    };
    add(no_reward, "no_reward");
    add(no_disc, "no_disc");
    add(no_her, "no_her");
    return out;
}

void TrainConfig::validate() const {
    if (reward_weight < 0) throw std::invalid_argument("train: reward weight must be >= 0");
    if (entropy_weight < 0) throw std::invalid_argument("train: entropy weight must be >= 0");
    if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("train: discount must be in (0, 1]");
    if (!(clip_lo > 0.0 && clip_lo <= 1.0 && clip_hi >= 1.0))
        throw std::invalid_argument("train: clip bounds must satisfy 0 < lo <= 1 <= hi");
    if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
}

std::string train_epoch_json(const TrainEpoch& e) {
    nlohmann::json j{{"epoch", e.epoch},
                     {"loss_D", e.loss_disc},
                     {"loss_T", e.loss_transition},
                     {"loss_pi", e.loss_policy},
                     {"mean_reward", e.mean_reward},
                     {"entropy", e.entropy},
                     {"grad_norm_D", e.grad_norm_disc},
                     {"grad_norm_T", e.grad_norm_transition},
                     {"grad_norm_pi", e.grad_norm_policy},
                     {"D_expert", e.disc_expert},
                     {"D_generated", e.disc_generated},
                     {"sequence_ce", e.sequence_ce},
                     {"distance", e.distance},
                     {"ratio_clamp_events", e.ratio_clamp_events},
                     {"skipped_updates", e.skipped_updates},
                     {"q_recursion_max_error", e.q_recursion_max_error}};
    return j.dump();
}

// --- small pieces --------------------------------------------------------------

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
    std::vector<double> q(rewards.size());
    double next = 0.0;
    for (std::size_t t = rewards.size(); t-- > 0;) {
        q[t] = rewards[t] + gamma * next;
        next = q[t];
    }
    return q;
}

double q_recursion_error(const std::vector<double>& rewards, const std::vector<double>& q, double gamma) {
    double err = 0.0;
    for (std::size_t t = 0; t < rewards.size(); ++t) {
        const double next = t + 1 < q.size() ? q[t + 1] : 0.0;
        err = std::max(err, std::abs(q[t] - (rewards[t] + gamma * next)));
    }
    return err;
}

double categorical_entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0) h -= p * std::log(p);
    return h;
}

RatioResult importance_ratio(double pi, double beta, double lo, double hi) {
    RatioResult r;
    if (beta < kBehaviorFloor) {
        beta = kBehaviorFloor;
        r.floored = true;
    }
    r.ratio = std::clamp(pi / beta, lo, hi);
    return r;
}

ExpertBatch make_expert_batch(const std::vector<const Trajectory*>& batch, const ContextNet& context,
                              ContextSource source, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("make_expert_batch: empty batch");
    const std::size_t horizon = batch.front()->horizon();
    std::vector<Vec> starts, goals;
    for (const auto* t : batch) {
        if (t->horizon() != horizon) throw std::invalid_argument("make_expert_batch: mixed horizons");
        starts.push_back(t->start());
        goals.push_back(t->goal());
    }
    auto heads = context.encode_batch(stack_rows(starts), stack_rows(goals));
    ExpertBatch out;
    if (source == ContextSource::mean) {
        out.z = heads.mean.detach();
    } else {
        std::vector<double> eps(heads.mean.size());
        for (auto& e : eps) e = rng.normal();
        out.z = ad::reparameterize(heads.mean, heads.log_var, Tensor::from(heads.mean.shape(), std::move(eps))).detach();
    }
    for (std::size_t t = 0; t < horizon; ++t) {
        std::vector<Vec> rows;
        std::vector<std::size_t> acts;
        for (const auto* tr : batch) {
            rows.push_back(tr->observations[t]);
            acts.push_back(tr->actions[t]);
        }
        out.states.push_back(stack_rows(rows));
        out.actions.push_back(std::move(acts));
    }
    out.goal = stack_rows(goals);
    return out;
}

namespace {

std::vector<std::size_t> flatten(const std::vector<std::vector<std::size_t>>& v) {
    std::vector<std::size_t> out;
    for (const auto& x : v) out.insert(out.end(), x.begin(), x.end());
    return out;
}

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Tensor sequence_ce(const SoftRollout& gen, const ExpertBatch& expert) {
    std::vector<Tensor> picks;
    for (std::size_t t = 0; t < expert.horizon(); ++t)
        picks.push_back(ad::pick(ad::log_softmax(gen.logits[t]), expert.actions[t]));
    return ad::neg(ad::mean(ad::concat_rows(picks)));
}

}  // namespace

Tensor disc_loss(const Discriminator& d, const Tensor& s_expert, const Tensor& a_expert, const Tensor& s_gen,
                 const Tensor& a_gen) {
    Tensor le = d.logits(s_expert, a_expert);
    Tensor lg = d.logits(s_gen, a_gen);
    // log D = log_sigmoid(l), log(1 - D) = log_sigmoid(-l)
    return ad::neg(ad::add(ad::mean(ad::log_sigmoid(le)), ad::mean(ad::log_sigmoid(ad::neg(lg)))));
}

std::vector<Tensor> one_step_predictions(const GenModel& model, const ExpertBatch& expert, Rng* noise) {
    const std::size_t b = expert.size(), m = model.dims().actions;
    std::vector<Tensor> out;
    Tensor s = Tensor::zeros({b, model.dims().state_dim});
    Tensor a = Tensor::zeros({b, m});
    for (std::size_t t = 0; t <= expert.horizon(); ++t) {
        out.push_back(model.next_state(s, a, expert.z, noise));
        if (t == expert.horizon()) break;
        s = expert.states[t];
        a = one_hot(expert.actions[t], m);
    }
    return out;
}

GeneratorLosses transition_loss(const GenModel& model, const SoftRollout& gen, const ExpertBatch& expert,
                                const Discriminator& d, const TrainConfig& cfg, const Ablations& ab, Rng* noise) {
    const std::size_t m = model.dims().actions;
    const std::size_t horizon = expert.horizon();
    GeneratorLosses out;
    auto pred = one_step_predictions(model, expert, noise);
    std::vector<Tensor> targets = expert.states;
    targets.push_back(expert.goal);
    Tensor p_all = ad::concat_rows(pred);
    out.one_step = ad::scale(ad::sum(ad::square(ad::sub(p_all, ad::concat_rows(targets)))),
                             1.0 / static_cast<double>(p_all.rows()));
    Tensor s_gen = ad::concat_rows(gen.states);
    Tensor s_exp = ad::concat_rows(expert.states);
    out.distance = ad::scale(ad::sum(ad::square(ad::sub(s_gen, s_exp))), 1.0 / static_cast<double>(s_gen.rows()));
    out.sequence = sequence_ce(gen, expert);
    out.total = ad::add(ad::scale(ad::add(out.one_step, out.distance), cfg.distance_weight),
                        ad::scale(out.sequence, cfg.sequence_weight));
    if (!ab.no_disc) {
        std::vector<Tensor> acted(pred.begin(), pred.begin() + static_cast<std::ptrdiff_t>(horizon));
        Tensor a_exp = one_hot(flatten(expert.actions), m);
        out.adversarial = ad::mean(ad::log_sigmoid(ad::neg(d.logits(ad::concat_rows(acted), a_exp))));
        out.total = ad::add(out.total, out.adversarial);
    }
    return out;
}

PolicyLosses policy_loss(const GenModel& model, const SoftRollout& gen, const DiscreteRollout& behavior_rollout,
                         const ExpertBatch& expert, const BehaviorPolicy& beta, const Discriminator& d,
                         const TrainConfig& cfg, const Ablations& ab) {
    PolicyLosses out;
    std::vector<Tensor> picks;
    for (std::size_t t = 0; t < expert.horizon(); ++t)
        picks.push_back(ad::pick(ad::log_softmax(model.policy_logits(expert.states[t])), expert.actions[t]));
    Tensor ce = ad::add(sequence_ce(gen, expert), ad::neg(ad::mean(ad::concat_rows(picks))));
    out.sequence = ce.item();
    out.total = ad::scale(ce, cfg.sequence_weight);
    if (ab.no_reward || ab.no_disc) return out;

    const std::size_t horizon = behavior_rollout.states.size();
    const std::size_t b = expert.size();
    const std::size_t m = model.dims().actions;

    // Rewards and returns per rollout row.
    std::vector<std::vector<double>> rewards(b, std::vector<double>(horizon));
    for (std::size_t t = 0; t < horizon; ++t) {
        Tensor l = d.logits(behavior_rollout.states[t], one_hot(behavior_rollout.actions[t], m));
        const Tensor r_t = ad::log_sigmoid(l);
        auto r = r_t.value();
        for (std::size_t i = 0; i < b; ++i) rewards[i][t] = r[i];
    }
    std::vector<std::vector<double>> q(b);
    double reward_sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        q[i] = discounted_returns(rewards[i], cfg.discount);
        out.q_recursion_error = std::max(out.q_recursion_error, q_recursion_error(rewards[i], q[i], cfg.discount));
        reward_sum += std::accumulate(rewards[i].begin(), rewards[i].end(), 0.0);
    }
    out.mean_reward = reward_sum / static_cast<double>(b * horizon);

    std::vector<Tensor> pg_terms, entropies;
    out.ratio_min = std::numeric_limits<double>::infinity();
    out.ratio_max = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < horizon; ++t) {
        const Tensor& s = behavior_rollout.states[t];
        const auto& acts = behavior_rollout.actions[t];
        Tensor logp = ad::log_softmax(model.readout_logits(s));
        Tensor beta_p = ad::softmax(beta.logits(s));
        double baseline = 0.0;
        for (std::size_t i = 0; i < b; ++i) baseline += q[i][t];
        baseline /= static_cast<double>(b);
        double var = 0.0;
        for (std::size_t i = 0; i < b; ++i) var += (q[i][t] - baseline) * (q[i][t] - baseline);
        const double spread = std::sqrt(var / static_cast<double>(b)) + 1e-8;
        std::vector<double> w(b);
        for (std::size_t i = 0; i < b; ++i) {
            const double pi = std::exp(logp.at(i, acts[i]));
            auto rr = importance_ratio(pi, beta_p.at(i, acts[i]), cfg.clip_lo, cfg.clip_hi);
            out.clamp_events += rr.floored;
            out.ratio_min = std::min(out.ratio_min, rr.ratio);
            out.ratio_max = std::max(out.ratio_max, rr.ratio);
            w[i] = rr.ratio * (q[i][t] - baseline) / spread;
        }
        Tensor picked = ad::pick(logp, acts);
        pg_terms.push_back(ad::neg(ad::mean(ad::scale_rows(picked, Tensor::from({b, 1}, std::move(w))))));
        // H = -sum p log p per row
        Tensor h = ad::neg(ad::row_sum(ad::mul(ad::exp(logp), logp)));
        entropies.push_back(ad::mean(h));
    }
    Tensor pg = ad::scale(ad::sum(ad::concat_rows(pg_terms)), 1.0 / static_cast<double>(horizon));
    Tensor ent = ad::scale(ad::sum(ad::concat_rows(entropies)), 1.0 / static_cast<double>(horizon));
    out.pg = pg.item();
    out.entropy = ent.item();
    out.total = ad::sub(ad::add(out.total, ad::scale(pg, cfg.reward_weight)), ad::scale(ent, cfg.entropy_weight));
    return out;
}

// --- updates -----------------------------------------------------------------

Optimizers make_optimizers(GenModel& model, Discriminator& d, const TrainConfig& cfg) {
    return Optimizers{ad::Adam(tensors_of(d.params()), {.lr = cfg.lr_disc}),
                      ad::Adam(tensors_of(model.transition_params()), {.lr = cfg.lr_transition}),
                      ad::Adam(tensors_of(model.policy_params()), {.lr = cfg.lr_policy})};
}

namespace {

StepStats apply(ad::Adam& opt, const Tensor& loss) {
    StepStats st;
    st.loss = loss.item();
    st.finite = std::isfinite(st.loss);
    if (!st.finite) return st;
    opt.zero_grad();
    ad::backward(loss);
    st.grad_norm = opt.grad_norm();
    st.skipped = opt.step();
    return st;
}

}  // namespace

StepStats disc_update(Discriminator& d, ad::Adam& opt, const ExpertBatch& expert, const DiscreteRollout& gen,
                      std::size_t actions) {
    Tensor s_exp = ad::concat_rows(expert.states);
    Tensor a_exp = one_hot(flatten(expert.actions), actions);
    Tensor s_gen = ad::concat_rows(gen.states);
    Tensor a_gen = one_hot(flatten(gen.actions), actions);
    return apply(opt, disc_loss(d, s_exp, a_exp, s_gen, a_gen));
}

StepStats transition_update(GenModel& model, ad::Adam& opt, const ExpertBatch& expert, const Discriminator& d,
                            const TrainConfig& cfg, const Ablations& ab, Rng& rng, GeneratorLosses* out) {
    const bool stochastic = model.variant() == Variant::ext;
    SoftRollout gen = rollout_soft(model, expert.z, expert.horizon(), stochastic ? &rng : nullptr);
    GeneratorLosses losses = transition_loss(model, gen, expert, d, cfg, ab, stochastic ? &rng : nullptr);
    StepStats st = apply(opt, losses.total);
    if (out) *out = losses;
    return st;
}

StepStats policy_update(GenModel& model, ad::Adam& opt, const ExpertBatch& expert, const BehaviorPolicy& beta,
                        const Discriminator& d, const TrainConfig& cfg, const Ablations& ab, Rng& rng,
                        PolicyLosses* out) {
    const bool stochastic = model.variant() == Variant::ext;
    SoftRollout gen = rollout_soft(model, expert.z, expert.horizon(), stochastic ? &rng : nullptr);
    DiscreteRollout br;
    if (!ab.no_reward && !ab.no_disc)
        br = rollout_discrete(model, expert.z, expert.horizon(), behavior_chooser(beta), rng, stochastic);
    PolicyLosses losses = policy_loss(model, gen, br, expert, beta, d, cfg, ab);
    StepStats st = apply(opt, losses.total);
    if (out) *out = losses;
    return st;
}

TrainReport train_gail(GenModel& model, Discriminator& d, const BehaviorPolicy& beta, const ContextNet& context,
                       const Dataset& dataset, const TrainConfig& cfg, const Ablations& ab) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train_gail: empty dataset");
    Optimizers opt = make_optimizers(model, d, cfg);
    Rng rng(cfg.seed);
    TrainReport rep;

    std::map<std::size_t, std::vector<const Trajectory*>> by_horizon;
    for (const auto& t : dataset) by_horizon[t.horizon()].push_back(&t);

    ParamList gen_params = model.params();
    ParamList disc_params = d.params();
    ParamList gen_good = clone_params(gen_params);
    ParamList disc_good = clone_params(disc_params);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::vector<const Trajectory*>> batches;
        for (auto& [h, trajs] : by_horizon) {
            rng.shuffle(trajs);
            for (std::size_t i = 0; i < trajs.size(); i += cfg.batch_size)
                batches.emplace_back(trajs.begin() + static_cast<std::ptrdiff_t>(i),
                                     trajs.begin() + static_cast<std::ptrdiff_t>(std::min(trajs.size(), i + cfg.batch_size)));
        }
        rng.shuffle(batches);

        TrainEpoch e{.epoch = epoch};
        std::vector<double> de, dg;
        bool finite = true;
        for (const auto& batch : batches) {
            ExpertBatch expert = make_expert_batch(batch, context, cfg.context, rng);
            const bool stochastic = model.variant() == Variant::ext;
            if (!ab.no_disc) {
                const std::size_t m = model.dims().actions;
                DiscreteRollout gen = rollout_discrete(model, expert.z, expert.horizon(),
                                                       policy_chooser(model, RolloutMode::sample), rng, stochastic);
                auto st = disc_update(d, opt.disc, expert, gen, m);
                finite = finite && st.finite;
                e.loss_disc += st.loss;
                e.grad_norm_disc += st.grad_norm;
                e.skipped_updates += st.skipped;
                // Post-step discriminator read-out.
                auto pe = ad::sigmoid(d.logits(ad::concat_rows(expert.states), one_hot(flatten(expert.actions), m)));
                auto pg = ad::sigmoid(d.logits(ad::concat_rows(gen.states), one_hot(flatten(gen.actions), m)));
                de.push_back(mean_of(pe.value()));
                dg.push_back(mean_of(pg.value()));
            }
            GeneratorLosses gl;
            auto ts = transition_update(model, opt.transition, expert, d, cfg, ab, rng, &gl);
            finite = finite && ts.finite;
            e.loss_transition += ts.loss;
            e.grad_norm_transition += ts.grad_norm;
            e.distance += gl.distance.item();
            e.skipped_updates += ts.skipped;

            PolicyLosses pl;
            auto ps = policy_update(model, opt.policy, expert, beta, d, cfg, ab, rng, &pl);
            finite = finite && ps.finite;
            e.loss_policy += ps.loss;
            e.grad_norm_policy += ps.grad_norm;
            e.mean_reward += pl.mean_reward;
            e.entropy += pl.entropy;
            e.sequence_ce += pl.sequence;
            e.ratio_clamp_events += pl.clamp_events;
            e.skipped_updates += ps.skipped;
            e.q_recursion_max_error = std::max(e.q_recursion_max_error, pl.q_recursion_error);
            if (!finite) break;
        }
        if (!finite) {
            spdlog::warn("adversarial training diverged at epoch {}; restoring last finite parameters", epoch);
            copy_values(gen_good, gen_params);
            copy_values(disc_good, disc_params);
            rep.diverged = true;
            break;
        }
        const auto nb = static_cast<double>(batches.size());
        for (double* v : {&e.loss_disc, &e.loss_transition, &e.loss_policy, &e.mean_reward, &e.entropy,
                          &e.grad_norm_disc, &e.grad_norm_transition, &e.grad_norm_policy, &e.sequence_ce,
                          &e.distance})
            *v /= nb;
        e.disc_expert = mean_of(de);
        e.disc_generated = mean_of(dg);
        copy_values(gen_params, gen_good);
        copy_values(disc_params, disc_good);
        spdlog::debug("gail epoch {} D {:.4f} T {:.4f} pi {:.4f} ce {:.4f} dist {:.4f} r {:.4f}", epoch, e.loss_disc,
                      e.loss_transition, e.loss_policy, e.sequence_ce, e.distance, e.mean_reward);
        rep.epochs.push_back(e);
    }
    return rep;
}

}  // namespace mgail
