// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "json.hpp"
#include "mgail/rng.hpp"

namespace mgail {

struct ActionScore {
    bool success = false;
    double accuracy = 0.0;  // fraction in [0, 1]
    double iou = 0.0;
};

// Exact match, per-position match rate, IoU of the action sets.
ActionScore action_metrics(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred);

struct OrderScore {
    std::size_t hamming = 0;
    double pair_accuracy = 1.0;
};

// Both must be permutations of {0..T-1}. Pair accuracy is the fraction of
// element pairs whose relative order agrees.
OrderScore order_metrics(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred);
std::size_t concordant_pair_count(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred);

// Integer tallies for procedure planning at one horizon.
struct ActionTally {
    std::size_t queries = 0;
    std::size_t successes = 0;
    std::size_t correct_steps = 0;
    std::size_t total_steps = 0;
    double iou_sum = 0.0;

    void add(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred);
    void merge(const ActionTally& o);
    double success_rate() const;  // percent
    double accuracy() const;      // percent
    double miou() const;          // percent
};

struct OrderTally {
    std::size_t queries = 0;
    std::size_t hamming_sum = 0;
    std::size_t concordant_pairs = 0;
    std::size_t total_pairs = 0;

    void add(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred);
    void merge(const OrderTally& o);
    double mean_hamming() const;
    double pair_accuracy() const;  // percent
};

struct MetricsReport {
    std::map<std::size_t, ActionTally> procedure;  // by horizon
    std::map<std::size_t, OrderTally> walk;        // by horizon
};

nlohmann::json to_json(const ActionTally& t);
nlohmann::json to_json(const OrderTally& t);
nlohmann::json to_json(const MetricsReport& r);

// I.i.d. uniform action plans, `draws` per ground-truth query.
ActionTally uniform_procedure(const std::vector<std::vector<std::size_t>>& gts, std::size_t actions,
                              std::size_t draws, Rng& rng);
// Random orders against a ground-truth order of pool indices. With fixed
// endpoints only the interior is shuffled.
OrderTally uniform_walk(const std::vector<std::vector<std::size_t>>& gts, bool fixed_endpoints, std::size_t draws,
                        Rng& rng);

}  // namespace mgail
