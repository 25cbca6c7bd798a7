// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mgail/metrics.hpp"
#include "mgail/rng.hpp"
#include "oracles.hpp"

using namespace mgail;
using namespace mgail::test;

TEST_CASE("hand examples") {
    auto a = action_metrics({1, 2, 3}, {1, 2, 3});
    CHECK(a.success);
    CHECK(a.accuracy == 1.0);
    CHECK(a.iou == 1.0);
    auto b = action_metrics({1, 2, 3}, {3, 2, 1});
    CHECK_FALSE(b.success);
    CHECK(b.accuracy == doctest::Approx(1.0 / 3));
    CHECK(b.iou == 1.0);
    auto c = action_metrics({1, 2, 3}, {1, 2, 4});
    CHECK_FALSE(c.success);
    CHECK(c.accuracy == doctest::Approx(2.0 / 3));
    CHECK(c.iou == 0.5);

    auto o = order_metrics({0, 1, 2}, {0, 2, 1});
    CHECK(o.hamming == 2);
    CHECK(o.pair_accuracy == doctest::Approx(2.0 / 3));
    auto same = order_metrics({2, 0, 1, 3}, {2, 0, 1, 3});
    CHECK(same.hamming == 0);
    CHECK(same.pair_accuracy == 1.0);
}

TEST_CASE("action metrics agree with the reference on random pairs") {
    Rng rng(1);
    for (int k = 0; k < 10000; ++k) {
        const std::size_t t = 1 + rng.index(8), m = 1 + rng.index(20);
        Seq gt(t), pred(t);
        for (auto& x : gt) x = rng.index(m);
        for (std::size_t i = 0; i < t; ++i) pred[i] = rng.uniform() < 0.5 ? gt[i] : rng.index(m);
        auto got = action_metrics(gt, pred);
        auto ref = ref_action(gt, pred, m);
        REQUIRE(got.success == ref.success);
        REQUIRE(got.accuracy == ref.accuracy);
        REQUIRE(got.iou == ref.iou);
        // success => accuracy 100% => iou 1
        if (got.success) REQUIRE(got.accuracy == 1.0);
        if (got.accuracy == 1.0) REQUIRE(got.iou == 1.0);
    }
}

TEST_CASE("order metrics agree with the reference on random permutations") {
    Rng rng(2);
    for (int k = 0; k < 10000; ++k) {
        const std::size_t t = 1 + rng.index(8);
        auto gt = random_perm(t, rng), pred = random_perm(t, rng);
        auto got = order_metrics(gt, pred);
        auto [ham, pa] = ref_order(gt, pred);
        REQUIRE(got.hamming == ham);
        REQUIRE(got.pair_accuracy == doctest::Approx(pa).epsilon(1e-15));
        REQUIRE(got.hamming <= t);
        // symmetric hamming, zero on itself
        REQUIRE(order_metrics(pred, gt).hamming == ham);
        REQUIRE(order_metrics(gt, gt).hamming == 0);
    }
}

TEST_CASE("pair accuracy is invariant under consistent relabeling") {
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
        const std::size_t t = 2 + rng.index(7);
        auto gt = random_perm(t, rng), pred = random_perm(t, rng), relabel = random_perm(t, rng);
        Seq g2(t), p2(t);
        for (std::size_t i = 0; i < t; ++i) {
            g2[i] = relabel[gt[i]];
            p2[i] = relabel[pred[i]];
        }
        REQUIRE(order_metrics(gt, pred).pair_accuracy == order_metrics(g2, p2).pair_accuracy);
    }
}

TEST_CASE("invalid inputs are rejected") {
    CHECK_THROWS_AS(action_metrics({1, 2}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(order_metrics({0, 1, 2}, {0, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(order_metrics({0, 1, 3}, {0, 1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(order_metrics({0, 1}, {0, 1, 2}), std::invalid_argument);
}

TEST_CASE("tallies derive from integer counts and merge") {
    Rng rng(4);
    ActionTally all, left, right;
    OrderTally oall, oleft, oright;
    for (int k = 0; k < 500; ++k) {
        Seq gt(4), pred(4);
        for (auto& x : gt) x = rng.index(5);
        for (auto& x : pred) x = rng.index(5);
        all.add(gt, pred);
        (k % 2 ? left : right).add(gt, pred);
        auto a = random_perm(5, rng), b = random_perm(5, rng);
        oall.add(a, b);
        (k % 2 ? oleft : oright).add(a, b);
    }
    left.merge(right);
    oleft.merge(oright);
    CHECK(left.successes == all.successes);
    CHECK(left.correct_steps == all.correct_steps);
    CHECK(left.success_rate() == all.success_rate());
    CHECK(left.accuracy() == 100.0 * all.correct_steps / all.total_steps);
    CHECK(oleft.hamming_sum == oall.hamming_sum);
    CHECK(oleft.pair_accuracy() == 100.0 * oall.concordant_pairs / oall.total_pairs);
    for (double p : {all.success_rate(), all.accuracy(), all.miou(), oall.pair_accuracy()}) {
        CHECK(p >= 0.0);
        CHECK(p <= 100.0);
    }
    auto j = to_json(all);
    CHECK(j.at("successes") == all.successes);
    CHECK(j.at("success_rate") == all.success_rate());
}

TEST_CASE("uniform baseline: accuracy matches its analytic expectation") {
    Rng rng(5);
    const std::size_t m = 7;
    std::vector<Seq> gts;
    for (int k = 0; k < 1000; ++k) gts.push_back({rng.index(m), rng.index(m), rng.index(m)});
    auto t = uniform_procedure(gts, m, 100, rng);
    REQUIRE(t.queries == 100000);
    const double p = 1.0 / m;
    const double se = std::sqrt(p * (1 - p) / t.total_steps);
    CHECK(std::abs(t.accuracy() / 100 - p) < 3 * se);
    const double ps = p * p * p;
    CHECK(std::abs(t.success_rate() / 100 - ps) < 3 * std::sqrt(ps * (1 - ps) / t.queries));
    std::vector<Seq> zeros(10, Seq{0, 0, 0});
    CHECK(uniform_procedure(zeros, 1, 3, rng).success_rate() == 100.0);
}

TEST_CASE("uniform walk baseline") {
    Rng rng(6);
    std::vector<Seq> three(50, Seq{0, 1, 2});
    auto fixed3 = uniform_walk(three, true, 20, rng);
    CHECK(fixed3.hamming_sum == 0);

    std::vector<Seq> four(2000, Seq{0, 1, 2, 3});
    auto fixed = uniform_walk(four, true, 1, rng);
    // two interior slots: hamming 0 or 2 with equal chance
    CHECK(std::abs(fixed.mean_hamming() - 1.0) < 3 * 1.0 / std::sqrt(2000.0));
    auto free = uniform_walk(four, false, 1, rng);
    // a random permutation fixes one point on average
    CHECK(std::abs(free.mean_hamming() - 3.0) < 3 * 1.0 / std::sqrt(2000.0));
    CHECK(std::abs(free.pair_accuracy() - 50.0) < 3.0);
}
