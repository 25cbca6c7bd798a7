// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs: world -> split -> relabel -> context -> beta -> adversarial
// training -> evaluation, plus the configuration document and embedding dump.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgail/checkpoint.hpp"
#include "mgail/metrics.hpp"
#include "mgail/planner.hpp"

namespace mgail {

struct EvalConfig {
    std::vector<std::size_t> horizons{3, 4};
    std::size_t walk_horizon = 4;  // observations per walk pool, endpoints included
    std::size_t num_samples = 1;
    ContextSource context_mode = ContextSource::mean;
    std::size_t uniform_draws = 200;
    bool allow_greedy = false;
};

struct ExperimentConfig {
    WorldConfig world;
    std::size_t demos_per_task = 200;
    double train_fraction = 0.7;
    double her_fraction = kDefaultRelabelFraction;
    std::size_t latent_dim = 16;
    std::size_t hidden = 64;
    std::size_t context_hidden = 128;
    ContextTrainConfig context{.epochs = 300, .lr = 3e-3};
    BcConfig bc;
    TrainConfig gail;
    EvalConfig eval;
    Variant variant = Variant::ext;
    Ablations ablations;
    std::uint64_t seed = 0;

    void validate() const;
    ModelDims dims() const { return {world.action_vocab, world.obs_dim, latent_dim, hidden, context_hidden}; }
    // All stage seeds follow `seed`.
    ExperimentConfig with_seed(std::uint64_t s) const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Missing fields keep their defaults; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ExperimentError : std::runtime_error {
    ExperimentError(std::string stage, const std::string& what)
        : std::runtime_error("stage '" + stage + "': " + what), stage(std::move(stage)) {}
    std::string stage;
};

struct PreparedData {
    std::vector<TaskSpec> tasks;
    Dataset train;  // after relabeling (unless no_her)
    Dataset test;
    std::vector<std::size_t> train_ids;  // indices into the generated dataset
    std::vector<std::size_t> test_ids;
    std::size_t relabeled = 0;
    std::size_t relabel_skipped = 0;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct TrainedModel {
    ModelBundle model;
    ContextTrainReport context_report;
    BcReport bc_report;
    TrainReport gail_report;
};

// Trains context (unless `context` is given), beta and the generator.
TrainedModel train_model(const ExperimentConfig& cfg, const Dataset& train, const ContextNet* context = nullptr);

struct ProcedureQuery {
    std::size_t trajectory = 0;  // index into the test set
    std::size_t offset = 0;
    std::vector<std::size_t> gt;
    Vec start, goal;
};

struct WalkQuery {
    std::size_t trajectory = 0;
    std::size_t offset = 0;
    Vec start, goal;
    std::vector<Vec> candidates;       // shuffled interior observations
    std::vector<std::size_t> gt_order; // pool indices in true order
};

struct EvalQueries {
    std::map<std::size_t, std::vector<ProcedureQuery>> procedure;  // by horizon
    std::vector<WalkQuery> walk;
};

// One random window per test trajectory and horizon, deterministic in seed.
EvalQueries make_queries(const Dataset& test, const EvalConfig& cfg, std::uint64_t seed);

struct EvalResult {
    MetricsReport model;
    MetricsReport uniform;        // walk uses fixed endpoints
    OrderTally uniform_walk_free;  // walk with a free permutation
    std::vector<nlohmann::json> query_log;
};

EvalResult evaluate(const ModelBundle& model, const EvalQueries& queries, const ExperimentConfig& cfg);

struct ExperimentResult {
    ExperimentConfig config;
    PreparedData data;
    TrainedModel trained;
    EvalResult eval;
};

nlohmann::json metrics_json(const ExperimentResult& r);
Checkpoint make_checkpoint(const ExperimentConfig& cfg, const ModelBundle& model);

// Writes config.json, metrics.json, queries.jsonl, train_log.jsonl,
// context_log.jsonl and checkpoint.bin into out_dir when given. A STAGE file
// names the stage in progress and reads "done" at the end.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir = {});

struct EmbedRow {
    int task_id = 0;
    Vec z;
};

// Posterior means for `pairs_per_task` random (start, goal) pairs per task.
std::vector<EmbedRow> embed_dump(const ContextNet& context, const Dataset& dataset, std::size_t pairs_per_task,
                                 Rng& rng);
void write_embed_csv(const std::filesystem::path& path, const std::vector<EmbedRow>& rows);

}  // namespace mgail
