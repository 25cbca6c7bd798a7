// SPDX-License-Identifier: Apache-2.0
#include "mgail/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mgail {

void PlanQuery::validate(std::size_t obs_dim, std::size_t max_horizon) const {
    if (horizon < 2) throw std::invalid_argument("plan: horizon must be >= 2");
    if (horizon > max_horizon)
        throw std::invalid_argument("plan: horizon " + std::to_string(horizon) + " exceeds configured maximum " +
                                    std::to_string(max_horizon));
    if (num_samples < 1) throw std::invalid_argument("plan: num_samples must be >= 1");
    if (start.size() != obs_dim || goal.size() != obs_dim)
        throw std::invalid_argument("plan: observation dimension must be " + std::to_string(obs_dim));
}

ProcedurePlan plan_procedure(const ModelBundle& model, const PlanQuery& query, const Rng& rng,
                             std::size_t max_horizon) {
    query.validate(model.dims.obs_dim, max_horizon);
    const ContextPosterior post = model.context.encode(query.start, query.goal);
    const std::size_t m = model.dims.actions;

    ProcedurePlan best;
    best.log_d = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < query.num_samples; ++i) {
        Rng r = rng.split(i);
        ContextVariable z = query.mode == ContextSource::mean ? posterior_mean(post) : sample_context(post, r);
        auto steps = rollout(model.gen, z, query.horizon, r, i == 0 ? RolloutMode::greedy : RolloutMode::sample);
        ProcedurePlan p;
        for (const auto& st : steps) {
            Vec a(m, 0.0);
            a[st.action] = 1.0;
            p.log_d += disc_forward(model.disc, st.state, a).reward;
            p.actions.push_back(st.action);
        }
        if (i == 0 || p.log_d > best.log_d) best = std::move(p);
    }
    return best;
}

std::size_t nearest_index(const std::vector<Vec>& pool, std::span<const double> x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pool.size(); ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) d += (pool[k][j] - x[j]) * (pool[k][j] - x[j]);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

ScoreMatrix build_score_matrix(const ModelBundle& model, const std::vector<Vec>& pool, const ContextVariable& z) {
    if (pool.size() < 2) throw std::invalid_argument("score matrix: pool needs at least 2 observations");
    const std::size_t n = pool.size();
    const std::size_t m = model.dims.actions;
    const std::size_t d = model.dims.obs_dim;
    ScoreMatrix out = ScoreMatrix::zeros(n);
    Tensor zr = ad::expand_rows(Tensor::row(z.z), m);
    Tensor eye = Tensor::zeros({m, m});
    for (std::size_t a = 0; a < m; ++a) eye.mutable_value()[a * m + a] = 1.0;

    for (std::size_t i = 0; i < n; ++i) {
        Tensor s = Tensor::row(pool[i]);
        const Tensor probs_t = ad::softmax(model.gen.policy_logits(s));
        auto probs = probs_t.value();
        if (model.gen.variant() == Variant::int_cell) {
            // The cell's transition has no action input: one successor for all actions.
            Tensor next = model.gen.next_state(s, Tensor::zeros({1, m}), Tensor::row(z.z), nullptr);
            const std::size_t k = nearest_index(pool, next.value());
            for (double p : probs) out.at(i, k) += p;
            continue;
        }
        Tensor next = model.gen.next_state(ad::expand_rows(s, m), eye, zr, nullptr);
        auto nv = next.value();
        for (std::size_t a = 0; a < m; ++a) {
            const std::size_t k = nearest_index(pool, nv.subspan(a * d, d));
            out.at(i, k) += probs[a];
        }
    }
    return out;
}

double path_score(const ScoreMatrix& s, const std::vector<std::size_t>& order) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) total += s.at(order[i], order[i + 1]);
    return total;
}

bool is_valid_walk(const std::vector<std::size_t>& order, std::size_t n) {
    if (order.size() != n || n < 2 || order.front() != 0 || order.back() != n - 1) return false;
    std::vector<bool> seen(n, false);
    for (auto k : order) {
        if (k >= n || seen[k]) return false;
        seen[k] = true;
    }
    return true;
}

namespace {

WalkPlan finish(const ScoreMatrix& s, std::vector<std::size_t> order) {
    if (!is_valid_walk(order, s.n)) throw std::logic_error("walk plan violates endpoint/bijection constraints");
    WalkPlan p;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) p.step_scores.push_back(s.at(order[i], order[i + 1]));
    p.score = path_score(s, order);
    p.order = std::move(order);
    return p;
}

WalkPlan solve_greedy(const ScoreMatrix& s) {
    const std::size_t n = s.n;
    std::vector<std::size_t> order{0};
    std::vector<bool> used(n, false);
    used[0] = used[n - 1] = true;
    for (std::size_t step = 1; step + 1 < n; ++step) {
        std::size_t best = n;
        for (std::size_t k = 1; k + 1 < n; ++k)
            if (!used[k] && (best == n || s.at(order.back(), k) > s.at(order.back(), best))) best = k;
        used[best] = true;
        order.push_back(best);
    }
    order.push_back(n - 1);
    return finish(s, std::move(order));
}

}  // namespace

WalkPlan solve_permutation(const ScoreMatrix& s, bool allow_greedy) {
    const std::size_t n = s.n;
    if (n < 2) throw std::invalid_argument("solve_permutation: need at least 2 pool entries");
    for (double v : s.s)
        if (!std::isfinite(v)) throw std::invalid_argument("solve_permutation: non-finite score");
    if (n > kExactSolverLimit) {
        if (!allow_greedy)
            throw std::invalid_argument("solve_permutation: pool size " + std::to_string(n) +
                                        " exceeds exact limit " + std::to_string(kExactSolverLimit) +
                                        "; enable the greedy fallback");
        return solve_greedy(s);
    }
    if (n == 2) return finish(s, {0, 1});

    // Interior nodes 1..n-2 map to bits 0..k-1.
    const std::size_t k = n - 2;
    const std::size_t full = (std::size_t{1} << k) - 1;
    const double ninf = -std::numeric_limits<double>::infinity();
    // g[mask * n + j]: best remaining score standing at node j having visited `mask`.
    std::vector<double> g((full + 1) * n, ninf);
    for (std::size_t j = 1; j <= k; ++j) g[full * n + j] = s.at(j, n - 1);
    for (std::size_t mask = full; mask-- > 0;) {
        for (std::size_t j = 0; j <= k; ++j) {
            if (j == 0 ? mask != 0 : !(mask >> (j - 1) & 1)) continue;
            double best = ninf;
            for (std::size_t c = 1; c <= k; ++c) {
                if (mask >> (c - 1) & 1) continue;
                best = std::max(best, s.at(j, c) + g[(mask | std::size_t{1} << (c - 1)) * n + c]);
            }
            g[mask * n + j] = best;
        }
    }
    std::vector<std::size_t> order{0};
    std::size_t mask = 0, cur = 0;
    while (mask != full) {
        for (std::size_t c = 1; c <= k; ++c) {
            if (mask >> (c - 1) & 1) continue;
            const std::size_t next = mask | std::size_t{1} << (c - 1);
            if (s.at(cur, c) + g[next * n + c] == g[mask * n + cur]) {
                order.push_back(c);
                mask = next;
                cur = c;
                break;
            }
        }
    }
    order.push_back(n - 1);
    return finish(s, std::move(order));
}

WalkPlan walkthrough(const ModelBundle& model, const Vec& start, const Vec& goal, const std::vector<Vec>& candidates,
                     bool allow_greedy) {
    std::vector<Vec> pool;
    pool.reserve(candidates.size() + 2);
    pool.push_back(start);
    pool.insert(pool.end(), candidates.begin(), candidates.end());
    pool.push_back(goal);
    const ContextVariable z = posterior_mean(model.context.encode(start, goal));
    return solve_permutation(build_score_matrix(model, pool, z), allow_greedy);
}

}  // namespace mgail
