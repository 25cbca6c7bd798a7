// SPDX-License-Identifier: Apache-2.0
//
// Synthetic instructional tasks. Each task is a set of steps under a
// precedence DAG built from ordered blocks: steps inside a block are
// interchangeable, every step of block b precedes every step of block b+1.
//
// A demonstration with T actions carries T+1 observations. Observation t is
// emitted before action t from the set of steps completed so far; the last
// observation shows every step done (the visual goal):
//
//   o = E[task] + c * sum_{a in completed} U[a] + noise
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mgail/rng.hpp"

namespace mgail {

using Vec = std::vector<double>;

struct TaskSpec {
    int task_id = 0;
    std::vector<std::size_t> steps;  // global action ids
    // (i, j): steps[i] must precede steps[j]
    std::vector<std::pair<std::size_t, std::size_t>> precedence;

    bool is_acyclic() const;
    // True if `actions` lists every step exactly once in an order allowed by
    // the precedence edges.
    bool is_linear_extension(const std::vector<std::size_t>& actions) const;
    std::uint64_t count_linear_extensions() const;
    // Step positions that may come next after the steps in `done_mask`.
    std::vector<std::size_t> available(std::uint64_t done_mask) const;
};

struct WorldConfig {
    std::size_t num_tasks = 8;
    std::size_t min_steps = 4;
    std::size_t max_steps = 6;
    std::size_t action_vocab = 30;  // M
    std::size_t obs_dim = 40;       // d_o
    double noise_sigma = 0.05;
    double embed_norm = 20.0;  // length of every task / step embedding vector
    double interchangeable_fraction = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Trajectory {
    int task_id = 0;
    std::vector<Vec> observations;     // T + 1 entries
    std::vector<std::size_t> actions;  // T entries
    bool relabeled = false;

    std::size_t horizon() const { return actions.size(); }
    const Vec& start() const { return observations.front(); }
    const Vec& goal() const { return observations.back(); }
    // Observations [first, last] and the actions between them.
    Trajectory slice(std::size_t first, std::size_t last) const;

    bool operator==(const Trajectory&) const = default;
};

using Dataset = std::vector<Trajectory>;

class World {
public:
    explicit World(const WorldConfig& config);

    const WorldConfig& config() const { return config_; }
    const std::vector<TaskSpec>& tasks() const { return tasks_; }
    const TaskSpec& task(int id) const { return tasks_.at(static_cast<std::size_t>(id)); }

    // Noise-free observation of `task` with the steps in `done_mask` complete.
    Vec emit_clean(const TaskSpec& task, std::uint64_t done_mask) const;
    Vec emit(const TaskSpec& task, std::uint64_t done_mask, Rng& rng) const;

    // Uniformly sampled linear extension of the task's precedence DAG.
    std::vector<std::size_t> sample_order(const TaskSpec& task, Rng& rng) const;
    Trajectory sample_expert_trajectory(const TaskSpec& task, Rng& rng) const;
    // demos_per_task trajectories for every task; trajectory k of task i
    // draws from its own split of rng.
    Dataset sample_dataset(std::size_t demos_per_task, const Rng& rng) const;

    double progress_scale() const { return progress_scale_; }

private:
    WorldConfig config_;
    std::vector<TaskSpec> tasks_;
    std::vector<Vec> task_embed_;    // E
    std::vector<Vec> action_embed_;  // U
    double progress_scale_;
};

// Task DAGs only (deterministic in config.seed).
std::vector<TaskSpec> generate_world(const WorldConfig& config);

struct RelabelReport {
    Dataset dataset;  // originals followed by the relabeled slices
    std::size_t added = 0;
    std::size_t skipped = 0;  // selected but too short for a non-adjacent pair
};

inline constexpr double kDefaultRelabelFraction = 0.30;

// Picks round(fraction * N) distinct trajectories; for each, a uniformly
// drawn observation pair (m, n) with n >= m + 2 yields the slice m..n.
RelabelReport her_relabel(const Dataset& dataset, double fraction, Rng& rng);

// --- trajectory files ------------------------------------------------------

struct DatasetLimits {
    std::optional<std::size_t> action_vocab;
    std::optional<std::size_t> obs_dim;
};

void write_trajectories(const std::filesystem::path& path, const Dataset& dataset);
std::string trajectory_to_json_line(const Trajectory& t);
Dataset read_trajectories(const std::filesystem::path& path, const DatasetLimits& limits = {});
Dataset parse_trajectories(const std::string& text, const DatasetLimits& limits = {});

}  // namespace mgail
