// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mgail/checkpoint.hpp"
#include "mgail/experiment.hpp"
#include "mgail/planner.hpp"
#include "support.hpp"

using namespace mgail;
using namespace mgail::test;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig c;
    c.world.num_tasks = 3;
    c.world.min_steps = 3;
    c.world.max_steps = 4;
    c.world.action_vocab = 10;
    c.world.obs_dim = 6;
    c.demos_per_task = 12;
    c.latent_dim = 3;
    c.hidden = 8;
    c.context_hidden = 8;
    c.context.epochs = 3;
    c.bc.epochs = 3;
    c.gail.epochs = 2;
    c.gail.batch_size = 8;
    c.eval.horizons = {3};
    c.eval.uniform_draws = 5;
    return c.with_seed(5);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mgail_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("config documents round-trip and reject unknown keys") {
    auto c = tiny_config();
    c.variant = Variant::int_cell;
    c.ablations = Ablations::parse("no_reward");
    auto j = to_json(c);
    auto back = experiment_config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.variant == Variant::int_cell);
    CHECK(back.ablations.no_reward);

    auto bad = j;
    bad["gail"]["learning_rate"] = 0.1;
    CHECK_THROWS_AS(experiment_config_from_json(bad), std::invalid_argument);
    bad = j;
    bad["extra"] = 1;
    CHECK_THROWS_AS(experiment_config_from_json(bad), std::invalid_argument);
    bad = j;
    bad["eval"]["horizons"] = {9};
    CHECK_THROWS_AS(experiment_config_from_json(bad), std::invalid_argument);

    // missing fields keep defaults
    auto d = experiment_config_from_json(nlohmann::json::object());
    CHECK(to_json(d) == to_json(ExperimentConfig{}));
}

TEST_CASE("with_seed is deterministic and changes every stage seed") {
    auto a = ExperimentConfig{}.with_seed(3), b = ExperimentConfig{}.with_seed(3), c = ExperimentConfig{}.with_seed(4);
    CHECK(to_json(a) == to_json(b));
    CHECK(a.world.seed != c.world.seed);
    CHECK(a.gail.seed != c.gail.seed);
}

TEST_CASE("train/test split is by whole trajectory") {
    auto c = tiny_config();
    auto d = prepare_data(c);
    std::set<std::size_t> train(d.train_ids.begin(), d.train_ids.end());
    for (auto i : d.test_ids) CHECK(train.count(i) == 0);
    CHECK(d.train_ids.size() + d.test_ids.size() == c.world.num_tasks * c.demos_per_task);
    CHECK(d.relabeled > 0);
    std::size_t flagged = 0;
    for (const auto& t : d.train) flagged += t.relabeled;
    CHECK(flagged == d.relabeled);
    for (const auto& t : d.test) CHECK_FALSE(t.relabeled);

    c.ablations.no_her = true;
    auto n = prepare_data(c);
    CHECK(n.relabeled == 0);
    CHECK(n.test_ids == d.test_ids);
}

TEST_CASE("queries are deterministic windows of test trajectories") {
    auto c = tiny_config();
    auto d = prepare_data(c);
    c.eval.horizons = {2, 3};
    auto q1 = make_queries(d.test, c.eval, 9);
    auto q2 = make_queries(d.test, c.eval, 9);
    for (auto h : c.eval.horizons) {
        REQUIRE(q1.procedure[h].size() == q2.procedure[h].size());
        for (std::size_t i = 0; i < q1.procedure[h].size(); ++i) {
            const auto& q = q1.procedure[h][i];
            CHECK(q.gt == q2.procedure[h][i].gt);
            const auto& t = d.test[q.trajectory];
            CHECK(q.gt.size() == h);
            CHECK(q.start == t.observations[q.offset]);
            CHECK(q.goal == t.observations[q.offset + h]);
        }
    }
    for (const auto& w : q1.walk) {
        const auto& t = d.test[w.trajectory];
        REQUIRE(is_valid_walk(w.gt_order, c.eval.walk_horizon));
        std::vector<Vec> pool{w.start};
        pool.insert(pool.end(), w.candidates.begin(), w.candidates.end());
        pool.push_back(w.goal);
        for (std::size_t i = 0; i < w.gt_order.size(); ++i) CHECK(pool[w.gt_order[i]] == t.observations[w.offset + i]);
    }
}

TEST_CASE("checkpoint round trip is byte exact") {
    auto c = tiny_config();
    Rng rng(1);
    auto model = ModelBundle::make(Variant::ext, c.dims(), rng);
    jitter(model.params(), rng);
    auto ck = make_checkpoint(c, model);
    const auto bytes = serialize_checkpoint(ck);
    auto back = parse_checkpoint(bytes);
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(back.model.variant == Variant::ext);
    CHECK(back.model.dims == c.dims());
    CHECK(back.seed == c.seed);
    auto pa = model.params(), pb = back.model.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(to_vec(pa[i].tensor) == to_vec(pb[i].tensor));
    }

    auto path = fs::temp_directory_path() / "mgail_ck_roundtrip.bin";
    save_checkpoint(path, ck);
    CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
    fs::remove(path);
}

TEST_CASE("corrupted checkpoints are rejected with the array name") {
    auto c = tiny_config();
    Rng rng(2);
    auto ck = make_checkpoint(c, ModelBundle::make(Variant::int_cell, c.dims(), rng));
    const auto bytes = serialize_checkpoint(ck);

    CHECK_THROWS_AS(parse_checkpoint("garbage"), CheckpointError);
    CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 8)), CheckpointError);
    CHECK_THROWS_AS(parse_checkpoint(bytes + "x"), CheckpointError);

    // Rewrite the header so one array claims a different length.
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + 12, 8);
    auto header = nlohmann::json::parse(bytes.substr(20, hlen));
    const std::string victim = header["arrays"][3]["name"];
    header["arrays"][3]["count"] = header["arrays"][3]["count"].get<std::size_t>() + 1;
    const std::string h2 = header.dump();
    std::string forged = bytes.substr(0, 12);
    const std::uint64_t n2 = h2.size();
    forged.append(reinterpret_cast<const char*>(&n2), 8);
    forged += h2;
    forged += bytes.substr(20 + hlen);
    try {
        parse_checkpoint(forged);
        FAIL("accepted a forged array length");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find(victim) != std::string::npos);
    }

    std::string wrong_version = bytes;
    wrong_version[8] = 9;
    CHECK_THROWS_AS(parse_checkpoint(wrong_version), CheckpointError);
}

TEST_CASE("run_experiment writes artifacts and is deterministic") {
    auto c = tiny_config();
    auto d1 = scratch("run1"), d2 = scratch("run2");
    auto r1 = run_experiment(c, d1);
    run_experiment(c, d2);
    for (const char* f : {"config.json", "metrics.json", "queries.jsonl", "train_log.jsonl", "context_log.jsonl",
                          "checkpoint.bin"})
        CHECK(slurp(d1 / f) == slurp(d2 / f));
    CHECK(slurp(d1 / "STAGE") == "done\n");

    // metrics recompute exactly from the per-query log
    ActionTally tally;
    OrderTally walk;
    std::istringstream log(slurp(d1 / "queries.jsonl"));
    std::string line;
    while (std::getline(log, line)) {
        auto j = nlohmann::json::parse(line);
        if (j["kind"] == "procedure")
            tally.add(j["gt"].get<std::vector<std::size_t>>(), j["pred"].get<std::vector<std::size_t>>());
        else {
            auto order = j["pred"].get<std::vector<std::size_t>>();
            REQUIRE(is_valid_walk(order, order.size()));
            walk.add(j["gt"].get<std::vector<std::size_t>>(), order);
        }
    }
    auto metrics = nlohmann::json::parse(slurp(d1 / "metrics.json"));
    CHECK(metrics["model"]["procedure"]["T=3"] == to_json(tally));
    CHECK(metrics["model"]["walk"]["T=4"] == to_json(walk));

    // a loaded checkpoint reproduces the stored plans
    auto ck = load_checkpoint(d1 / "checkpoint.bin");
    auto again = evaluate(ck.model, make_queries(r1.data.test, c.eval, c.seed), c);
    REQUIRE(again.query_log.size() == r1.eval.query_log.size());
    for (std::size_t i = 0; i < again.query_log.size(); ++i) CHECK(again.query_log[i] == r1.eval.query_log[i]);

    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("failures name their stage and leave a marker") {
    auto c = tiny_config();
    c.demos_per_task = 1;
    auto dir = scratch("fail");
    try {
        run_experiment(c, dir);
        FAIL("invalid config accepted");
    } catch (const ExperimentError& e) {
        CHECK(e.stage == "config");
    }
    CHECK(slurp(dir / "STAGE") == "config\n");
    fs::remove_all(dir);
}

TEST_CASE("embedding dump") {
    auto c = tiny_config();
    auto d = prepare_data(c);
    Rng rng(3);
    auto ctx = ContextNet::make(c.dims().context(), rng);
    auto rows = embed_dump(ctx, d.train, 7, rng);
    CHECK(rows.size() == c.world.num_tasks * 7);
    for (const auto& r : rows) CHECK(r.z.size() == c.latent_dim);
    auto path = fs::temp_directory_path() / "mgail_embed.csv";
    write_embed_csv(path, rows);
    std::istringstream in(slurp(path));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        CHECK(static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) == c.latent_dim);
        ++lines;
    }
    CHECK(lines == rows.size() + 1);
    fs::remove(path);
}
