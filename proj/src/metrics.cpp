// SPDX-License-Identifier: Apache-2.0
#include "mgail/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace mgail {

ActionScore action_metrics(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred) {
    if (gt.size() != pred.size())
        throw std::invalid_argument("action_metrics: length mismatch (" + std::to_string(gt.size()) + " vs " +
                                    std::to_string(pred.size()) + ")");
    if (gt.empty()) throw std::invalid_argument("action_metrics: empty sequence");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) hits += gt[i] == pred[i];
    std::set<std::size_t> a(gt.begin(), gt.end()), b(pred.begin(), pred.end());
    std::vector<std::size_t> inter, uni;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
    return {hits == gt.size(), static_cast<double>(hits) / static_cast<double>(gt.size()),
            static_cast<double>(inter.size()) / static_cast<double>(uni.size())};
}

namespace {

std::vector<std::size_t> positions(const std::vector<std::size_t>& perm, const char* what) {
    std::vector<std::size_t> pos(perm.size(), perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= perm.size() || pos[perm[i]] != perm.size())
            throw std::invalid_argument(std::string("order_metrics: ") + what + " is not a permutation");
        pos[perm[i]] = i;
    }
    return pos;
}

}  // namespace

std::size_t concordant_pair_count(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred) {
    if (gt.size() != pred.size()) throw std::invalid_argument("order_metrics: length mismatch");
    positions(gt, "ground truth");
    const auto pos = positions(pred, "prediction");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t j = i + 1; j < gt.size(); ++j) agree += pos[gt[i]] < pos[gt[j]];
    return agree;
}

OrderScore order_metrics(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred) {
    const std::size_t agree = concordant_pair_count(gt, pred);
    OrderScore out;
    for (std::size_t i = 0; i < gt.size(); ++i) out.hamming += gt[i] != pred[i];
    const std::size_t t = gt.size();
    if (t < 2) return out;
    out.pair_accuracy = static_cast<double>(agree) / static_cast<double>(t * (t - 1) / 2);
    return out;
}

void ActionTally::add(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred) {
    auto s = action_metrics(gt, pred);
    ++queries;
    successes += s.success;
    for (std::size_t i = 0; i < gt.size(); ++i) correct_steps += gt[i] == pred[i];
    total_steps += gt.size();
    iou_sum += s.iou;
}

void ActionTally::merge(const ActionTally& o) {
    queries += o.queries;
    successes += o.successes;
    correct_steps += o.correct_steps;
    total_steps += o.total_steps;
    iou_sum += o.iou_sum;
}

double ActionTally::success_rate() const { return queries ? 100.0 * successes / static_cast<double>(queries) : 0.0; }
double ActionTally::accuracy() const {
    return total_steps ? 100.0 * correct_steps / static_cast<double>(total_steps) : 0.0;
}
double ActionTally::miou() const { return queries ? 100.0 * iou_sum / static_cast<double>(queries) : 0.0; }

void OrderTally::add(const std::vector<std::size_t>& gt, const std::vector<std::size_t>& pred) {
    const std::size_t t = gt.size();
    ++queries;
    hamming_sum += order_metrics(gt, pred).hamming;
    concordant_pairs += concordant_pair_count(gt, pred);
    total_pairs += t * (t - 1) / 2;
}

void OrderTally::merge(const OrderTally& o) {
    queries += o.queries;
    hamming_sum += o.hamming_sum;
    concordant_pairs += o.concordant_pairs;
    total_pairs += o.total_pairs;
}

double OrderTally::mean_hamming() const { return queries ? hamming_sum / static_cast<double>(queries) : 0.0; }
double OrderTally::pair_accuracy() const {
    return total_pairs ? 100.0 * concordant_pairs / static_cast<double>(total_pairs) : 100.0;
}

nlohmann::json to_json(const ActionTally& t) {
    return {{"queries", t.queries},         {"successes", t.successes},       {"correct_steps", t.correct_steps},
            {"total_steps", t.total_steps}, {"success_rate", t.success_rate()}, {"accuracy", t.accuracy()},
            {"miou", t.miou()}};
}

nlohmann::json to_json(const OrderTally& t) {
    return {{"queries", t.queries},
            {"hamming_sum", t.hamming_sum},
            {"concordant_pairs", t.concordant_pairs},
            {"total_pairs", t.total_pairs},
            {"hamming", t.mean_hamming()},
            {"pair_accuracy", t.pair_accuracy()}};
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j{{"procedure", nlohmann::json::object()}, {"walk", nlohmann::json::object()}};
    for (const auto& [h, t] : r.procedure) j["procedure"]["T=" + std::to_string(h)] = to_json(t);
    for (const auto& [h, t] : r.walk) j["walk"]["T=" + std::to_string(h)] = to_json(t);
    return j;
}

ActionTally uniform_procedure(const std::vector<std::vector<std::size_t>>& gts, std::size_t actions,
                              std::size_t draws, Rng& rng) {
    if (actions < 1) throw std::invalid_argument("uniform baseline: need at least one action");
    ActionTally t;
    std::vector<std::size_t> pred;
    for (const auto& gt : gts)
        for (std::size_t d = 0; d < draws; ++d) {
            pred.resize(gt.size());
            for (auto& a : pred) a = rng.index(actions);
            t.add(gt, pred);
        }
    return t;
}

OrderTally uniform_walk(const std::vector<std::vector<std::size_t>>& gts, bool fixed_endpoints, std::size_t draws,
                        Rng& rng) {
    OrderTally t;
    for (const auto& gt : gts) {
        std::vector<std::size_t> pred(gt.size());
        for (std::size_t d = 0; d < draws; ++d) {
            std::iota(pred.begin(), pred.end(), 0);
            if (fixed_endpoints && pred.size() > 2) {
                std::vector<std::size_t> mid(pred.begin() + 1, pred.end() - 1);
                rng.shuffle(mid);
                std::copy(mid.begin(), mid.end(), pred.begin() + 1);
            } else if (!fixed_endpoints) {
                rng.shuffle(pred);
            }
            t.add(gt, pred);
        }
    }
    return t;
}

}  // namespace mgail
