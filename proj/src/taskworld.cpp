// SPDX-License-Identifier: Apache-2.0
#include "mgail/taskworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mgail {

using json = nlohmann::json;

// --- TaskSpec --------------------------------------------------------------

std::vector<std::size_t> TaskSpec::available(std::uint64_t done_mask) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < steps.size(); ++j) {
        if (done_mask >> j & 1U) continue;
        bool ok = true;
        for (auto [a, b] : precedence)
            if (b == j && !(done_mask >> a & 1U)) {
                ok = false;
                break;
            }
        if (ok) out.push_back(j);
    }
    return out;
}

bool TaskSpec::is_acyclic() const {
    // Kahn: the DAG is acyclic iff repeatedly removing available steps empties it.
    std::uint64_t done = 0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        auto av = available(done);
        if (av.empty()) return false;
        done |= std::uint64_t{1} << av.front();
    }
    return true;
}

bool TaskSpec::is_linear_extension(const std::vector<std::size_t>& actions) const {
    if (actions.size() != steps.size()) return false;
    std::vector<std::size_t> pos(steps.size(), steps.size());
    for (std::size_t t = 0; t < actions.size(); ++t) {
        auto it = std::find(steps.begin(), steps.end(), actions[t]);
        if (it == steps.end()) return false;
        auto j = static_cast<std::size_t>(it - steps.begin());
        if (pos[j] != steps.size()) return false;
        pos[j] = t;
    }
    return std::all_of(precedence.begin(), precedence.end(), [&](auto e) { return pos[e.first] < pos[e.second]; });
}

namespace {

// ways[mask] = number of ways to finish the task from completed set `mask`.
std::vector<std::uint64_t> completion_counts(const TaskSpec& task) {
    const std::size_t k = task.steps.size();
    if (k > 24) throw std::invalid_argument("task has too many steps for exact extension counting");
    const std::uint64_t full = (std::uint64_t{1} << k) - 1;
    std::vector<std::uint64_t> ways(full + 1, 0);
    ways[full] = 1;
    for (std::uint64_t mask = full; mask-- > 0;) {
        std::uint64_t w = 0;
        for (auto j : task.available(mask)) w += ways[mask | (std::uint64_t{1} << j)];
        ways[mask] = w;
    }
    return ways;
}

}  // namespace

std::uint64_t TaskSpec::count_linear_extensions() const { return completion_counts(*this)[0]; }

// --- World -----------------------------------------------------------------

void WorldConfig::validate() const {
    if (num_tasks == 0) throw std::invalid_argument("world: num_tasks must be positive");
    if (min_steps < 1 || min_steps > max_steps) throw std::invalid_argument("world: invalid steps_per_task range");
    if (max_steps > action_vocab)
        throw std::invalid_argument("world: steps per task (" + std::to_string(max_steps) +
                                    ") exceed action vocabulary (" + std::to_string(action_vocab) + ")");
    if (max_steps > 20) throw std::invalid_argument("world: at most 20 steps per task supported");
    if (obs_dim < 2) throw std::invalid_argument("world: obs_dim must be >= 2");
    if (!(embed_norm > 0.0)) throw std::invalid_argument("world: embed_norm must be positive");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("world: noise_sigma must be >= 0");
    if (!(interchangeable_fraction >= 0.0 && interchangeable_fraction <= 1.0))
        throw std::invalid_argument("world: interchangeable_fraction must be in [0, 1]");
}

std::vector<TaskSpec> generate_world(const WorldConfig& config) {
    config.validate();
    Rng rng = Rng(config.seed).split(1);
    std::vector<TaskSpec> tasks;
    for (std::size_t i = 0; i < config.num_tasks; ++i) {
        TaskSpec t;
        t.task_id = static_cast<int>(i);
        const std::size_t k = config.min_steps + rng.index(config.max_steps - config.min_steps + 1);
        std::vector<std::size_t> vocab(config.action_vocab);
        std::iota(vocab.begin(), vocab.end(), 0);
        rng.shuffle(vocab);
        t.steps.assign(vocab.begin(), vocab.begin() + static_cast<std::ptrdiff_t>(k));

        // Adjacent pairs that become block boundaries.
        const std::size_t pairs = k - 1;
        const auto cuts = static_cast<std::size_t>(
            std::lround((1.0 - config.interchangeable_fraction) * static_cast<double>(pairs)));
        std::vector<std::size_t> order(pairs);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        std::vector<bool> boundary(pairs, false);
        for (std::size_t c = 0; c < cuts; ++c) boundary[order[c]] = true;

        std::vector<std::size_t> block(k, 0);
        for (std::size_t j = 1; j < k; ++j) block[j] = block[j - 1] + (boundary[j - 1] ? 1 : 0);
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
                if (block[b] == block[a] + 1) t.precedence.emplace_back(a, b);
        tasks.push_back(std::move(t));
    }
    return tasks;
}

namespace {

Vec random_direction(std::size_t d, double norm, Rng& rng) {
    Vec v(d);
    double n2 = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        n2 += x * x;
    }
    const double n = std::sqrt(n2);
    for (auto& x : v) x *= norm / n;
    return v;
}

}  // namespace

World::World(const WorldConfig& config) : config_(config), tasks_(generate_world(config)) {
    Rng rng = Rng(config.seed).split(2);
    for (std::size_t i = 0; i < config.num_tasks; ++i) task_embed_.push_back(random_direction(config.obs_dim, config.embed_norm, rng));
    for (std::size_t a = 0; a < config.action_vocab; ++a) action_embed_.push_back(random_direction(config.obs_dim, config.embed_norm, rng));
    progress_scale_ = 1.0 / std::sqrt(static_cast<double>(config.max_steps));
}

Vec World::emit_clean(const TaskSpec& task, std::uint64_t done_mask) const {
    Vec o = task_embed_.at(static_cast<std::size_t>(task.task_id));
    for (std::size_t j = 0; j < task.steps.size(); ++j) {
        if (!(done_mask >> j & 1U)) continue;
        const Vec& u = action_embed_[task.steps[j]];
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += progress_scale_ * u[i];
    }
    return o;
}

Vec World::emit(const TaskSpec& task, std::uint64_t done_mask, Rng& rng) const {
    Vec o = emit_clean(task, done_mask);
    if (config_.noise_sigma > 0.0)
        for (auto& x : o) x += config_.noise_sigma * rng.normal();
    return o;
}

std::vector<std::size_t> World::sample_order(const TaskSpec& task, Rng& rng) const {
    const auto ways = completion_counts(task);
    std::vector<std::size_t> order;
    std::uint64_t done = 0;
    for (std::size_t t = 0; t < task.steps.size(); ++t) {
        auto av = task.available(done);
        std::vector<double> w;
        for (auto j : av) w.push_back(static_cast<double>(ways[done | (std::uint64_t{1} << j)]));
        const std::size_t j = av[rng.categorical(w)];
        order.push_back(j);
        done |= std::uint64_t{1} << j;
    }
    return order;
}

Trajectory World::sample_expert_trajectory(const TaskSpec& task, Rng& rng) const {
    Trajectory tr;
    tr.task_id = task.task_id;
    const auto order = sample_order(task, rng);
    std::uint64_t done = 0;
    tr.observations.push_back(emit(task, done, rng));
    for (auto j : order) {
        tr.actions.push_back(task.steps[j]);
        done |= std::uint64_t{1} << j;
        tr.observations.push_back(emit(task, done, rng));
    }
    return tr;
}

Dataset World::sample_dataset(std::size_t demos_per_task, const Rng& rng) const {
    Dataset out;
    out.reserve(demos_per_task * tasks_.size());
    for (const auto& task : tasks_) {
        const Rng task_rng = rng.split(static_cast<std::uint64_t>(task.task_id));
        for (std::size_t k = 0; k < demos_per_task; ++k) {
            Rng r = task_rng.split(k);
            out.push_back(sample_expert_trajectory(task, r));
        }
    }
    return out;
}

// --- Trajectory / relabeling ---------------------------------------------

Trajectory Trajectory::slice(std::size_t first, std::size_t last) const {
    if (first >= last || last >= observations.size()) throw std::out_of_range("Trajectory::slice: bad range");
    Trajectory s;
    s.task_id = task_id;
    s.observations.assign(observations.begin() + static_cast<std::ptrdiff_t>(first),
                          observations.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    s.actions.assign(actions.begin() + static_cast<std::ptrdiff_t>(first),
                     actions.begin() + static_cast<std::ptrdiff_t>(last));
    s.relabeled = relabeled;
    return s;
}

RelabelReport her_relabel(const Dataset& dataset, double fraction, Rng& rng) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("her_relabel: fraction must be in [0, 1]");
    RelabelReport rep;
    rep.dataset = dataset;
    const auto chosen_count =
        static_cast<std::size_t>(std::lround(fraction * static_cast<double>(dataset.size())));
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    idx.resize(chosen_count);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) {
        const Trajectory& tr = dataset[i];
        const std::size_t n_obs = tr.observations.size();
        if (n_obs < 3) {
            ++rep.skipped;
            continue;
        }
        // Pairs (m, n) with n >= m + 2 over n_obs observations.
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t m = 0; m + 2 < n_obs; ++m)
            for (std::size_t n = m + 2; n < n_obs; ++n) pairs.emplace_back(m, n);
        auto [m, n] = pairs[rng.index(pairs.size())];
        Trajectory s = tr.slice(m, n);
        s.relabeled = true;
        rep.dataset.push_back(std::move(s));
        ++rep.added;
    }
    return rep;
}

// --- I/O -------------------------------------------------------------------

std::string trajectory_to_json_line(const Trajectory& t) {
    json j;
    j["task_id"] = t.task_id;
    j["obs"] = t.observations;
    j["actions"] = t.actions;
    j["relabeled"] = t.relabeled;
    return j.dump();
}

void write_trajectories(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& t : dataset) out << trajectory_to_json_line(t) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

[[noreturn]] void record_error(std::size_t line, const std::string& field, const std::string& what) {
    std::ostringstream os;
    os << "line " << line << ": field '" << field << "': " << what;
    throw std::runtime_error(os.str());
}

Trajectory parse_record(const std::string& text, std::size_t line, const DatasetLimits& limits) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        record_error(line, "<record>", e.what());
    }
    if (!j.is_object()) record_error(line, "<record>", "expected an object");
    for (const char* f : {"task_id", "obs", "actions", "relabeled"})
        if (!j.contains(f)) record_error(line, f, "missing");

    Trajectory t;
    if (!j["task_id"].is_number_integer()) record_error(line, "task_id", "expected integer");
    t.task_id = j["task_id"].get<int>();
    if (t.task_id < 0) record_error(line, "task_id", "negative");
    if (!j["relabeled"].is_boolean()) record_error(line, "relabeled", "expected boolean");
    t.relabeled = j["relabeled"].get<bool>();

    const auto& acts = j["actions"];
    if (!acts.is_array()) record_error(line, "actions", "expected array");
    for (const auto& a : acts) {
        if (!a.is_number_unsigned()) record_error(line, "actions", "expected non-negative integer");
        const auto id = a.get<std::size_t>();
        if (limits.action_vocab && id >= *limits.action_vocab)
            record_error(line, "actions",
                         "action id " + std::to_string(id) + " >= vocabulary " + std::to_string(*limits.action_vocab));
        t.actions.push_back(id);
    }
    const auto& obs = j["obs"];
    if (!obs.is_array()) record_error(line, "obs", "expected array");
    for (const auto& row : obs) {
        if (!row.is_array()) record_error(line, "obs", "expected array of arrays");
        Vec v;
        for (const auto& x : row) {
            if (!x.is_number()) record_error(line, "obs", "expected number");
            v.push_back(x.get<double>());
        }
        if (limits.obs_dim && v.size() != *limits.obs_dim)
            record_error(line, "obs", "observation dimension " + std::to_string(v.size()) + " != " +
                                          std::to_string(*limits.obs_dim));
        if (!t.observations.empty() && v.size() != t.observations.front().size())
            record_error(line, "obs", "ragged observation dimensions");
        t.observations.push_back(std::move(v));
    }
    if (t.actions.empty()) record_error(line, "actions", "empty trajectory");
    if (t.observations.size() != t.actions.size() + 1)
        record_error(line, "obs", "expected " + std::to_string(t.actions.size() + 1) + " observations, got " +
                                      std::to_string(t.observations.size()));
    return t;
}

}  // namespace

Dataset parse_trajectories(const std::string& text, const DatasetLimits& limits) {
    Dataset out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_record(line, lineno, limits));
    }
    return out;
}

Dataset read_trajectories(const std::filesystem::path& path, const DatasetLimits& limits) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trajectories(ss.str(), limits);
}

}  // namespace mgail
