// SPDX-License-Identifier: Apache-2.0
#include "mgail/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

namespace mgail {

using nlohmann::json;

// --- config ------------------------------------------------------------------

void ExperimentConfig::validate() const {
    world.validate();
    if (demos_per_task < 2) throw std::invalid_argument("config: demos_per_task must be >= 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("config: train_fraction must be in (0, 1)");
    if (her_fraction < 0.0 || her_fraction > 1.0) throw std::invalid_argument("config: her_fraction must be in [0, 1]");
    if (latent_dim < 1 || hidden < 1 || context_hidden < 1) throw std::invalid_argument("config: latent_dim and hidden sizes must be positive");
    gail.validate();
    if (eval.horizons.empty()) throw std::invalid_argument("config: eval.horizons is empty");
    for (auto h : eval.horizons)
        if (h < 2 || h > world.max_steps)
            throw std::invalid_argument("config: eval horizon " + std::to_string(h) + " outside [2, max_steps=" +
                                        std::to_string(world.max_steps) + "]");
    if (eval.walk_horizon < 2 || eval.walk_horizon > world.max_steps + 1)
        throw std::invalid_argument("config: eval.walk_horizon must be in [2, max_steps + 1]");
    if (eval.walk_horizon > kExactSolverLimit && !eval.allow_greedy)
        throw std::invalid_argument("config: walk_horizon above the exact solver limit needs allow_greedy");
    if (eval.num_samples < 1) throw std::invalid_argument("config: eval.num_samples must be >= 1");
}

ExperimentConfig ExperimentConfig::with_seed(std::uint64_t s) const {
    ExperimentConfig c = *this;
    c.seed = s;
    Rng root(s);
    c.world.seed = root.split(1).engine()();
    c.context.seed = root.split(2).engine()();
    c.bc.seed = root.split(3).engine()();
    c.gail.seed = root.split(4).engine()();
    return c;
}

namespace {

std::string source_name(ContextSource s) { return s == ContextSource::mean ? "mean" : "sample"; }
ContextSource parse_source(const std::string& s) {
    if (s == "mean") return ContextSource::mean;
    if (s == "sample") return ContextSource::sample;
    throw std::invalid_argument("config: context source must be mean|sample, got '" + s + "'");
}

// Copies j[key] into out if present and records the key as seen.
template <typename T>
void read(const json& j, const char* key, T& out, std::set<std::string>& seen) {
    seen.insert(key);
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!seen.count(it.key())) throw std::invalid_argument("config: unknown key '" + where + it.key() + "'");
}

}  // namespace

json to_json(const ExperimentConfig& c) {
    const auto& w = c.world;
    return {
        {"seed", c.seed},
        {"variant", to_string(c.variant)},
        {"ablations", c.ablations.tag()},
        {"demos_per_task", c.demos_per_task},
        {"train_fraction", c.train_fraction},
        {"her_fraction", c.her_fraction},
        {"latent_dim", c.latent_dim},
        {"hidden", c.hidden},
        {"context_hidden", c.context_hidden},
        {"world",
         {{"num_tasks", w.num_tasks}, {"min_steps", w.min_steps}, {"max_steps", w.max_steps},
          {"action_vocab", w.action_vocab}, {"obs_dim", w.obs_dim}, {"noise_sigma", w.noise_sigma}, {"embed_norm", w.embed_norm},
          {"interchangeable_fraction", w.interchangeable_fraction}, {"seed", w.seed}}},
        {"context",
         {{"epochs", c.context.epochs}, {"batch_size", c.context.batch_size}, {"lr", c.context.lr},
          {"seed", c.context.seed}}},
        {"bc", {{"epochs", c.bc.epochs}, {"batch_size", c.bc.batch_size}, {"lr", c.bc.lr}, {"seed", c.bc.seed}}},
        {"gail",
         {{"epochs", c.gail.epochs}, {"batch_size", c.gail.batch_size}, {"lr_disc", c.gail.lr_disc},
          {"lr_transition", c.gail.lr_transition}, {"lr_policy", c.gail.lr_policy},
          {"entropy_weight", c.gail.entropy_weight}, {"reward_weight", c.gail.reward_weight}, {"discount", c.gail.discount}, {"clip_lo", c.gail.clip_lo},
          {"clip_hi", c.gail.clip_hi}, {"distance_weight", c.gail.distance_weight},
          {"sequence_weight", c.gail.sequence_weight}, {"context", source_name(c.gail.context)},
          {"seed", c.gail.seed}}},
        {"eval",
         {{"horizons", c.eval.horizons}, {"walk_horizon", c.eval.walk_horizon}, {"num_samples", c.eval.num_samples},
          {"context_mode", source_name(c.eval.context_mode)}, {"uniform_draws", c.eval.uniform_draws},
          {"allow_greedy", c.eval.allow_greedy}}},
    };
}

ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig c;
    try {
        std::set<std::string> seen;
        std::string variant = to_string(c.variant), ablations;
        read(j, "seed", c.seed, seen);
        read(j, "variant", variant, seen);
        read(j, "ablations", ablations, seen);
        read(j, "demos_per_task", c.demos_per_task, seen);
        read(j, "train_fraction", c.train_fraction, seen);
        read(j, "her_fraction", c.her_fraction, seen);
        read(j, "latent_dim", c.latent_dim, seen);
        read(j, "hidden", c.hidden, seen);
        read(j, "context_hidden", c.context_hidden, seen);
        c.variant = parse_variant(variant);
        c.ablations = Ablations::parse(ablations);
        for (const char* k : {"world", "context", "bc", "gail", "eval"}) seen.insert(k);
        reject_unknown(j, seen, "");

        if (j.contains("world")) {
            const auto& w = j.at("world");
            std::set<std::string> s;
            read(w, "num_tasks", c.world.num_tasks, s);
            read(w, "min_steps", c.world.min_steps, s);
            read(w, "max_steps", c.world.max_steps, s);
            read(w, "action_vocab", c.world.action_vocab, s);
            read(w, "obs_dim", c.world.obs_dim, s);
            read(w, "noise_sigma", c.world.noise_sigma, s);
            read(w, "embed_norm", c.world.embed_norm, s);
            read(w, "interchangeable_fraction", c.world.interchangeable_fraction, s);
            read(w, "seed", c.world.seed, s);
            reject_unknown(w, s, "world.");
        }
        if (j.contains("context")) {
            const auto& x = j.at("context");
            std::set<std::string> s;
            read(x, "epochs", c.context.epochs, s);
            read(x, "batch_size", c.context.batch_size, s);
            read(x, "lr", c.context.lr, s);
            read(x, "seed", c.context.seed, s);
            reject_unknown(x, s, "context.");
        }
        if (j.contains("bc")) {
            const auto& x = j.at("bc");
            std::set<std::string> s;
            read(x, "epochs", c.bc.epochs, s);
            read(x, "batch_size", c.bc.batch_size, s);
            read(x, "lr", c.bc.lr, s);
            read(x, "seed", c.bc.seed, s);
            reject_unknown(x, s, "bc.");
        }
        if (j.contains("gail")) {
            const auto& x = j.at("gail");
            std::set<std::string> s;
            std::string ctx = source_name(c.gail.context);
            read(x, "epochs", c.gail.epochs, s);
            read(x, "batch_size", c.gail.batch_size, s);
            read(x, "lr_disc", c.gail.lr_disc, s);
            read(x, "lr_transition", c.gail.lr_transition, s);
            read(x, "lr_policy", c.gail.lr_policy, s);
            read(x, "entropy_weight", c.gail.entropy_weight, s);
            read(x, "reward_weight", c.gail.reward_weight, s);
            read(x, "discount", c.gail.discount, s);
            read(x, "clip_lo", c.gail.clip_lo, s);
            read(x, "clip_hi", c.gail.clip_hi, s);
            read(x, "distance_weight", c.gail.distance_weight, s);
            read(x, "sequence_weight", c.gail.sequence_weight, s);
            read(x, "context", ctx, s);
            read(x, "seed", c.gail.seed, s);
            c.gail.context = parse_source(ctx);
            reject_unknown(x, s, "gail.");
        }
        if (j.contains("eval")) {
            const auto& x = j.at("eval");
            std::set<std::string> s;
            std::string mode = source_name(c.eval.context_mode);
            read(x, "horizons", c.eval.horizons, s);
            read(x, "walk_horizon", c.eval.walk_horizon, s);
            read(x, "num_samples", c.eval.num_samples, s);
            read(x, "context_mode", mode, s);
            read(x, "uniform_draws", c.eval.uniform_draws, s);
            read(x, "allow_greedy", c.eval.allow_greedy, s);
            c.eval.context_mode = parse_source(mode);
            reject_unknown(x, s, "eval.");
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: " + path.string() + ": " + e.what());
    }
    return experiment_config_from_json(j);
}

// --- stages --------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& cfg) {
    World world(cfg.world);
    Rng root(cfg.seed);
    const Dataset all = world.sample_dataset(cfg.demos_per_task, root.split(10));
    PreparedData out;
    out.tasks = world.tasks();

    std::map<int, std::vector<std::size_t>> by_task;
    for (std::size_t i = 0; i < all.size(); ++i) by_task[all[i].task_id].push_back(i);
    Rng split_rng = root.split(11);
    for (auto& [task, ids] : by_task) {
        split_rng.shuffle(ids);
        const auto n_train = static_cast<std::size_t>(std::lround(cfg.train_fraction * static_cast<double>(ids.size())));
        out.train_ids.insert(out.train_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test_ids.insert(out.test_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    }
    std::sort(out.train_ids.begin(), out.train_ids.end());
    std::sort(out.test_ids.begin(), out.test_ids.end());
    Dataset train;
    for (auto i : out.train_ids) train.push_back(all[i]);
    for (auto i : out.test_ids) out.test.push_back(all[i]);

    if (cfg.ablations.no_her) {
        out.train = std::move(train);
    } else {
        Rng her_rng = root.split(12);
        auto rep = her_relabel(train, cfg.her_fraction, her_rng);
        out.train = std::move(rep.dataset);
        out.relabeled = rep.added;
        out.relabel_skipped = rep.skipped;
    }
    return out;
}

TrainedModel train_model(const ExperimentConfig& cfg, const Dataset& train, const ContextNet* context) {
    Rng init(cfg.seed);
    Rng init_rng = init.split(20);
    TrainedModel out{ModelBundle::make(cfg.variant, cfg.dims(), init_rng), {}, {}, {}};
    if (context) {
        ParamList dst = out.model.context.params();
        copy_values(context->params(), dst);
    } else {
        out.context_report = train_context(out.model.context, train, cfg.context);
    }
    out.bc_report = bc_fit(out.model.beta, train, cfg.bc);
    out.gail_report = train_gail(out.model.gen, out.model.disc, out.model.beta, out.model.context, train, cfg.gail,
                                 cfg.ablations);
    return out;
}

EvalQueries make_queries(const Dataset& test, const EvalConfig& cfg, std::uint64_t seed) {
    EvalQueries q;
    Rng root(seed);
    for (auto h : cfg.horizons) {
        Rng rng = root.split(100 + h);
        auto& list = q.procedure[h];
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto& t = test[i];
            if (t.horizon() < h) continue;
            const std::size_t m = rng.index(t.horizon() - h + 1);
            ProcedureQuery pq;
            pq.trajectory = i;
            pq.offset = m;
            pq.gt.assign(t.actions.begin() + static_cast<std::ptrdiff_t>(m),
                         t.actions.begin() + static_cast<std::ptrdiff_t>(m + h));
            pq.start = t.observations[m];
            pq.goal = t.observations[m + h];
            list.push_back(std::move(pq));
        }
    }
    Rng rng = root.split(200);
    const std::size_t w = cfg.walk_horizon;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& t = test[i];
        if (t.observations.size() < w) continue;
        const std::size_t m = rng.index(t.observations.size() - w + 1);
        WalkQuery wq;
        wq.trajectory = i;
        wq.offset = m;
        wq.start = t.observations[m];
        wq.goal = t.observations[m + w - 1];
        std::vector<std::size_t> perm(w - 2);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        std::vector<std::size_t> inv(perm.size());
        for (std::size_t j = 0; j < perm.size(); ++j) {
            wq.candidates.push_back(t.observations[m + 1 + perm[j]]);
            inv[perm[j]] = j;
        }
        wq.gt_order.push_back(0);
        for (auto j : inv) wq.gt_order.push_back(1 + j);
        wq.gt_order.push_back(w - 1);
        q.walk.push_back(std::move(wq));
    }
    return q;
}

EvalResult evaluate(const ModelBundle& model, const EvalQueries& queries, const ExperimentConfig& cfg) {
    EvalResult out;
    Rng root = Rng(cfg.seed).split(30);
    for (const auto& [h, list] : queries.procedure) {
        Rng plan_rng = root.split(h);
        auto& tally = out.model.procedure[h];
        std::vector<std::vector<std::size_t>> gts;
        for (std::size_t qi = 0; qi < list.size(); ++qi) {
            const auto& q = list[qi];
            PlanQuery pq{q.start, q.goal, h, cfg.eval.context_mode, cfg.eval.num_samples};
            auto plan = plan_procedure(model, pq, plan_rng.split(qi), cfg.world.max_steps);
            tally.add(q.gt, plan.actions);
            gts.push_back(q.gt);
            out.query_log.push_back({{"kind", "procedure"},
                                     {"T", h},
                                     {"trajectory", q.trajectory},
                                     {"offset", q.offset},
                                     {"gt", q.gt},
                                     {"pred", plan.actions},
                                     {"log_d", plan.log_d}});
        }
        Rng u = root.split(1000 + h);
        out.uniform.procedure[h] = uniform_procedure(gts, cfg.world.action_vocab, cfg.eval.uniform_draws, u);
    }
    if (!queries.walk.empty()) {
        const std::size_t w = cfg.eval.walk_horizon;
        auto& tally = out.model.walk[w];
        std::vector<std::vector<std::size_t>> gts;
        for (const auto& q : queries.walk) {
            auto plan = walkthrough(model, q.start, q.goal, q.candidates, cfg.eval.allow_greedy);
            tally.add(q.gt_order, plan.order);
            gts.push_back(q.gt_order);
            out.query_log.push_back({{"kind", "walk"},
                                     {"T", w},
                                     {"trajectory", q.trajectory},
                                     {"offset", q.offset},
                                     {"gt", q.gt_order},
                                     {"pred", plan.order},
                                     {"scores", plan.step_scores}});
        }
        Rng u = root.split(2000);
        out.uniform.walk[w] = uniform_walk(gts, true, cfg.eval.uniform_draws, u);
        Rng uf = root.split(2001);
        out.uniform_walk_free = uniform_walk(gts, false, cfg.eval.uniform_draws, uf);
    }
    return out;
}

json metrics_json(const ExperimentResult& r) {
    json j{{"variant", to_string(r.config.variant)},
           {"ablations", r.config.ablations.tag()},
           {"seed", r.config.seed},
           {"train_trajectories", r.data.train.size()},
           {"test_trajectories", r.data.test.size()},
           {"relabeled", r.data.relabeled},
           {"model", to_json(r.eval.model)},
           {"uniform", to_json(r.eval.uniform)},
           {"uniform_walk_free", to_json(r.eval.uniform_walk_free)},
           {"context_diverged", r.trained.context_report.diverged},
           {"gail_diverged", r.trained.gail_report.diverged}};
    return j;
}

Checkpoint make_checkpoint(const ExperimentConfig& cfg, const ModelBundle& model) {
    return Checkpoint{model, cfg.ablations, cfg.seed, cfg.world.max_steps, to_json(cfg)};
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg_in, const std::optional<std::filesystem::path>& out_dir) {
    ExperimentResult r;
    std::string stage = "config";
    auto mark = [&](const std::string& s) {
        stage = s;
        if (out_dir) write_text(*out_dir / "STAGE", s + "\n");
        spdlog::info("experiment stage: {}", s);
    };
    try {
        if (out_dir) std::filesystem::create_directories(*out_dir);
        mark("config");
        cfg_in.validate();
        r.config = cfg_in;
        if (out_dir) write_text(*out_dir / "config.json", to_json(r.config).dump(2) + "\n");

        mark("data");
        r.data = prepare_data(r.config);

        mark("train");
        r.trained = train_model(r.config, r.data.train);
        if (out_dir) {
            std::string log;
            for (const auto& e : r.trained.gail_report.epochs) log += train_epoch_json(e) + "\n";
            write_text(*out_dir / "train_log.jsonl", log);
            std::string clog;
            for (const auto& e : r.trained.context_report.curve)
                clog += json{{"epoch", e.epoch}, {"loss", e.loss}, {"reconstruction", e.reconstruction},
                             {"kl", e.kl}, {"min_kl", e.min_kl}}
                            .dump() +
                        "\n";
            write_text(*out_dir / "context_log.jsonl", clog);
            save_checkpoint(*out_dir / "checkpoint.bin", make_checkpoint(r.config, r.trained.model));
        }

        mark("eval");
        r.eval = evaluate(r.trained.model, make_queries(r.data.test, r.config.eval, r.config.seed), r.config);
        if (out_dir) {
            std::string qlog;
            for (const auto& q : r.eval.query_log) qlog += q.dump() + "\n";
            write_text(*out_dir / "queries.jsonl", qlog);
            write_text(*out_dir / "metrics.json", metrics_json(r).dump(2) + "\n");
        }
        mark("done");
    } catch (const ExperimentError&) {
        throw;
    } catch (const std::exception& e) {
        throw ExperimentError(stage, e.what());
    }
    return r;
}

std::vector<EmbedRow> embed_dump(const ContextNet& context, const Dataset& dataset, std::size_t pairs_per_task,
                                 Rng& rng) {
    std::map<int, std::vector<const Trajectory*>> by_task;
    for (const auto& t : dataset)
        if (!t.relabeled) by_task[t.task_id].push_back(&t);
    std::vector<EmbedRow> rows;
    for (const auto& [task, list] : by_task)
        for (std::size_t k = 0; k < pairs_per_task; ++k) {
            const Trajectory* t = list[rng.index(list.size())];
            rows.push_back({task, context.encode(t->start(), t->goal()).mean});
        }
    return rows;
}

void write_embed_csv(const std::filesystem::path& path, const std::vector<EmbedRow>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    const std::size_t d = rows.empty() ? 0 : rows.front().z.size();
    f << "task_id";
    for (std::size_t i = 0; i < d; ++i) f << ",z" << i;
    f << "\n";
    f.precision(17);
    for (const auto& r : rows) {
        f << r.task_id;
        for (double v : r.z) f << ',' << v;
        f << "\n";
    }
}

}  // namespace mgail
