// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "mgail/model.hpp"
#include "mgail/planner.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mgail;
using namespace mgail::test;

namespace {

const ModelDims kDims{5, 6, 3, 7, 8};

ModelBundle jittered_bundle(Variant v, std::uint64_t seed) {
    Rng rng(seed);
    auto b = ModelBundle::make(v, kDims, rng);
    jitter(b.params(), rng, 0.5);
    return b;
}

}  // namespace

TEST_CASE("subset DP equals exhaustive search") {
    Rng rng(1);
    for (std::size_t n = 3; n <= 7; ++n)
        for (int k = 0; k < 200; ++k) {
            auto s = random_scores(n, rng);
            auto plan = solve_permutation(s);
            auto [best, arg] = brute_force(s);
            CHECK(plan.score == doctest::Approx(best).epsilon(1e-12));
            CHECK(is_valid_walk(plan.order, n));
        }
}

TEST_CASE("ties resolve to the lexicographically first order") {
    for (std::size_t n = 2; n <= 8; ++n) {
        auto plan = solve_permutation(ScoreMatrix::zeros(n));
        std::vector<std::size_t> id(n);
        std::iota(id.begin(), id.end(), 0);
        CHECK(plan.order == id);
    }
    Rng rng(2);
    for (int k = 0; k < 200; ++k) {
        // integer scores make ties common
        auto s = ScoreMatrix::zeros(6);
        for (auto& v : s.s) v = static_cast<double>(rng.index(3));
        CHECK(solve_permutation(s).order == brute_force(s).second);
    }
}

TEST_CASE("single interior slot and dominant chain") {
    Rng rng(3);
    auto s3 = random_scores(3, rng);
    CHECK(solve_permutation(s3).order == std::vector<std::size_t>{0, 1, 2});

    auto s = random_scores(5, rng);
    // chain 0 -> 3 -> 1 -> 2 -> 4
    s.at(0, 3) = s.at(3, 1) = s.at(1, 2) = s.at(2, 4) = 100.0;
    auto plan = solve_permutation(s);
    CHECK(plan.order == std::vector<std::size_t>{0, 3, 1, 2, 4});
    REQUIRE(plan.step_scores.size() == 4);
    for (double x : plan.step_scores) CHECK(x == 100.0);
    CHECK(plan.score == 400.0);
}

TEST_CASE("exact solver limit and greedy fallback") {
    Rng rng(4);
    auto big = random_scores(kExactSolverLimit + 1, rng);
    CHECK_THROWS_AS(solve_permutation(big), std::invalid_argument);
    auto g = solve_permutation(big, true);
    CHECK(is_valid_walk(g.order, big.n));
    auto ok = random_scores(kExactSolverLimit, rng);
    CHECK(is_valid_walk(solve_permutation(ok).order, ok.n));
    auto bad = random_scores(4, rng);
    bad.at(1, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(solve_permutation(bad), std::invalid_argument);
}

TEST_CASE("solver beats random feasible permutations") {
    Rng rng(5);
    for (int k = 0; k < 20; ++k) {
        auto s = random_scores(8, rng);
        const double best = solve_permutation(s).score;
        std::vector<std::size_t> interior{1, 2, 3, 4, 5, 6};
        for (int j = 0; j < 1000; ++j) {
            rng.shuffle(interior);
            std::vector<std::size_t> order{0};
            order.insert(order.end(), interior.begin(), interior.end());
            order.push_back(7);
            REQUIRE(best >= path_score(s, order) - 1e-12);
        }
    }
}

TEST_CASE("walk validity checks") {
    CHECK(is_valid_walk({0, 2, 1, 3}, 4));
    CHECK_FALSE(is_valid_walk({1, 0, 2, 3}, 4));
    CHECK_FALSE(is_valid_walk({0, 1, 1, 3}, 4));
    CHECK_FALSE(is_valid_walk({0, 1, 3}, 4));
    CHECK_FALSE(is_valid_walk({0}, 1));
}

TEST_CASE("nearest index agrees with a distance scan") {
    Rng rng(6);
    for (int k = 0; k < 200; ++k) {
        const std::size_t n = 2 + rng.index(49);
        std::vector<Vec> pool;
        for (std::size_t i = 0; i < n; ++i) pool.push_back(to_vec(random_tensor(1, 4, rng)));
        auto x = to_vec(random_tensor(1, 4, rng));
        std::vector<double> d;
        for (const auto& p : pool) {
            double s = 0.0;
            for (std::size_t j = 0; j < 4; ++j) s += (p[j] - x[j]) * (p[j] - x[j]);
            d.push_back(s);
        }
        CHECK(nearest_index(pool, x) == static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin()));
    }
    std::vector<Vec> dup{{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
    CHECK(nearest_index(dup, Vec{1.0, 0.0}) == 0);
}

TEST_CASE("score matrix matches a per-action nearest-neighbour oracle") {
    Rng rng(7);
    for (Variant v : {Variant::int_cell, Variant::ext}) {
        auto b = jittered_bundle(v, 8);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t n = 2 + rng.index(10);
            std::vector<Vec> pool;
            for (std::size_t i = 0; i < n; ++i) pool.push_back(to_vec(random_tensor(1, 6, rng, 0.5)));
            ContextVariable z{to_vec(random_tensor(1, 3, rng))};
            auto s = build_score_matrix(b, pool, z);
            REQUIRE(s.n == n);

            auto oracle = ScoreMatrix::zeros(n);
            for (std::size_t i = 0; i < n; ++i) {
                auto probs = policy_forward(b.gen, pool[i]);
                for (std::size_t a = 0; a < kDims.actions; ++a) {
                    Vec oh(kDims.actions, 0.0);
                    oh[a] = 1.0;
                    auto next = to_vec(b.gen.next_state(Tensor::row(pool[i]), Tensor::row(oh), Tensor::row(z.z), nullptr));
                    std::size_t k = 0;
                    double best = std::numeric_limits<double>::infinity();
                    for (std::size_t c = 0; c < n; ++c) {
                        double d = 0.0;
                        for (std::size_t j = 0; j < 6; ++j) d += (pool[c][j] - next[j]) * (pool[c][j] - next[j]);
                        if (d < best) {
                            best = d;
                            k = c;
                        }
                    }
                    oracle.at(i, k) += probs[a];
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                double row = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    CHECK(s.at(i, k) == doctest::Approx(oracle.at(i, k)).epsilon(1e-12));
                    row += s.at(i, k);
                }
                CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
            }
            if (n == 2)
                for (std::size_t i = 0; i < 2; ++i) CHECK((s.at(i, 0) == 0.0 || s.at(i, 1) == 0.0));
        }
    }
}

TEST_CASE("walkthrough") {
    auto b = jittered_bundle(Variant::ext, 9);
    Rng rng(10);
    Vec o1 = to_vec(random_tensor(1, 6, rng)), oT = to_vec(random_tensor(1, 6, rng));
    CHECK(walkthrough(b, o1, oT, {}).order == std::vector<std::size_t>{0, 1});
    std::vector<Vec> cands;
    for (int i = 0; i < 4; ++i) cands.push_back(to_vec(random_tensor(1, 6, rng)));
    auto p1 = walkthrough(b, o1, oT, cands);
    auto p2 = walkthrough(b, o1, oT, cands);
    CHECK(p1.order == p2.order);
    CHECK(p1.score == p2.score);
    CHECK(is_valid_walk(p1.order, 6));
    CHECK(p1.step_scores.size() == 5);
}

TEST_CASE("procedure planning") {
    Rng rng(11);
    Vec o1 = to_vec(random_tensor(1, 6, rng)), oT = to_vec(random_tensor(1, 6, rng));

    SUBCASE("int with the posterior mean is deterministic") {
        auto b = jittered_bundle(Variant::int_cell, 12);
        PlanQuery q{o1, oT, 4, ContextSource::mean, 1};
        auto a = plan_procedure(b, q, Rng(1), 6);
        auto c = plan_procedure(b, q, Rng(2), 6);
        CHECK(a.actions == c.actions);
        CHECK(a.log_d == c.log_d);
        CHECK(a.actions.size() == 4);
        for (auto x : a.actions) CHECK(x < kDims.actions);
    }
    SUBCASE("one sample equals the first of many when D is indifferent") {
        Rng r(13);
        auto b = ModelBundle::make(Variant::ext, kDims, r);
        jitter(b.gen.params(), r, 0.5);
        jitter(b.context.params(), r, 0.5);
        PlanQuery q{o1, oT, 3, ContextSource::sample, 1};
        auto one = plan_procedure(b, q, Rng(5), 6);
        q.num_samples = 6;
        auto many = plan_procedure(b, q, Rng(5), 6);
        CHECK(one.actions == many.actions);
    }
    SUBCASE("best of n picks the highest log D") {
        auto b = jittered_bundle(Variant::ext, 14);
        PlanQuery q{o1, oT, 3, ContextSource::sample, 8};
        auto many = plan_procedure(b, q, Rng(5), 6);
        for (std::size_t n = 1; n <= 8; ++n) {
            q.num_samples = n;
            CHECK(many.log_d >= plan_procedure(b, q, Rng(5), 6).log_d);
        }
    }
    SUBCASE("query validation") {
        auto b = jittered_bundle(Variant::ext, 15);
        CHECK_THROWS_AS(plan_procedure(b, {o1, oT, 7, ContextSource::mean, 1}, Rng(1), 6), std::invalid_argument);
        CHECK_THROWS_AS(plan_procedure(b, {o1, oT, 1, ContextSource::mean, 1}, Rng(1), 6), std::invalid_argument);
        CHECK_THROWS_AS(plan_procedure(b, {o1, oT, 3, ContextSource::mean, 0}, Rng(1), 6), std::invalid_argument);
        CHECK_THROWS_AS(plan_procedure(b, {Vec(5, 0.0), oT, 3, ContextSource::mean, 1}, Rng(1), 6),
                        std::invalid_argument);
    }
}

TEST_CASE("the goal reaches the plan only through the context") {
    for (Variant v : {Variant::int_cell, Variant::ext}) {
        auto b = jittered_bundle(v, 16);
        // Cut the goal encoder: the posterior no longer depends on o_T.
        for (auto& p : b.context.params())
            if (p.name.rfind("enc_goal", 0) == 0)
                for (auto& x : Tensor(p.tensor).mutable_value()) x = 0.0;
        Rng rng(17);
        Vec o1 = to_vec(random_tensor(1, 6, rng));
        for (int k = 0; k < 10; ++k) {
            Vec g1 = to_vec(random_tensor(1, 6, rng, 3.0)), g2 = to_vec(random_tensor(1, 6, rng, 3.0));
            auto a = plan_procedure(b, {o1, g1, 5, ContextSource::sample, 3}, Rng(3), 6);
            auto c = plan_procedure(b, {o1, g2, 5, ContextSource::sample, 3}, Rng(3), 6);
            CHECK(a.actions == c.actions);
            CHECK(a.log_d == c.log_d);
        }
    }
}
