// SPDX-License-Identifier: Apache-2.0
//
// Inference with a trained bundle: action plans from (start, goal) and
// orderings of a candidate observation pool.
#pragma once

#include <cstdint>
#include <vector>

#include "mgail/model.hpp"

namespace mgail {

inline constexpr std::size_t kExactSolverLimit = 12;

struct PlanQuery {
    Vec start;
    Vec goal;
    std::size_t horizon = 3;
    ContextSource mode = ContextSource::mean;
    std::size_t num_samples = 1;

    void validate(std::size_t obs_dim, std::size_t max_horizon) const;
};

struct ProcedurePlan {
    std::vector<std::size_t> actions;
    double log_d = 0.0;  // accumulated log D along the rollout
};

// Sample 0 uses greedy actions and mean transitions; samples i >= 1 draw
// actions (and Ext transitions) from rng.split(i). With num_samples > 1 the
// sample with the highest log D wins, first index on ties.
ProcedurePlan plan_procedure(const ModelBundle& model, const PlanQuery& query, const Rng& rng,
                             std::size_t max_horizon);

// Row-major N x N.
struct ScoreMatrix {
    std::size_t n = 0;
    std::vector<double> s;

    double at(std::size_t i, std::size_t k) const { return s[i * n + k]; }
    double& at(std::size_t i, std::size_t k) { return s[i * n + k]; }
    static ScoreMatrix zeros(std::size_t n) { return {n, std::vector<double>(n * n, 0.0)}; }
};

// argmin_k |pool[k] - x|^2, lowest index on ties.
std::size_t nearest_index(const std::vector<Vec>& pool, std::span<const double> x);

ScoreMatrix build_score_matrix(const ModelBundle& model, const std::vector<Vec>& pool, const ContextVariable& z);

struct WalkPlan {
    std::vector<std::size_t> order;    // pool indices, order.front() == 0, order.back() == n - 1
    std::vector<double> step_scores;   // S[order[i], order[i + 1]]
    double score = 0.0;
};

double path_score(const ScoreMatrix& s, const std::vector<std::size_t>& order);
bool is_valid_walk(const std::vector<std::size_t>& order, std::size_t n);

// Maximizes the sum of S along the path with fixed endpoints. Exact subset DP
// up to kExactSolverLimit; beyond that throws unless allow_greedy.
WalkPlan solve_permutation(const ScoreMatrix& s, bool allow_greedy = false);

// Pool = [start, candidates..., goal]; context from (start, goal).
WalkPlan walkthrough(const ModelBundle& model, const Vec& start, const Vec& goal, const std::vector<Vec>& candidates,
                     bool allow_greedy = false);

}  // namespace mgail
