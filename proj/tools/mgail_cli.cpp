// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "mgail/experiment.hpp"

using namespace mgail;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out = "out";
};

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
    if (c.seed_set) cfg = cfg.with_seed(c.seed);
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* app, Common& c, bool with_out = true) {
    app->add_option("--config", c.config, "experiment config (JSON)");
    app->add_option_function<std::uint64_t>(
        "--seed", [&c](std::uint64_t s) { c.seed = s, c.seed_set = true; }, "master seed");
    if (with_out) app->add_option("--out", c.out, "output directory")->capture_default_str();
}

Vec to_vec(const json& j) { return j.get<Vec>(); }

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::ostream& output(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw std::runtime_error("cannot write " + path);
    return file;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

// --- gradcheck -----------------------------------------------------------------

double max_rel_error(const std::function<Tensor()>& loss, const ParamList& params) {
    const double h = 1e-6;
    Tensor l = loss();
    ad::backward(l);
    double worst = 0.0;
    for (const auto& p : params) {
        Tensor t = p.tensor;
        std::vector<double> g(t.grad().begin(), t.grad().end());
        auto v = t.mutable_value();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + h;
            const double up = loss().item();
            v[i] = keep - h;
            const double down = loss().item();
            v[i] = keep;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-6, std::abs(fd) + std::abs(g[i])));
        }
    }
    return worst;
}

int run_gradcheck(std::size_t trials, std::uint64_t seed) {
    GenDims dims{6, 3, 5, 7};
    ContextDims cdims{6, 3, 7};
    std::map<std::string, double> worst;
    Rng rng(seed);
    auto random_rows = [&](std::size_t r, std::size_t c) {
        std::vector<double> v(r * c);
        for (auto& x : v) x = rng.normal();
        return Tensor::from({r, c}, std::move(v));
    };
    for (std::size_t k = 0; k < trials; ++k) {
        Rng r = rng.split(k);
        auto ctx = ContextNet::make(cdims, r);
        Tensor s0 = random_rows(3, 6), g0 = random_rows(3, 6), eps = random_rows(3, 3);
        // Randomize the zero-initialised heads so their gradients are exercised.
        for (auto& p : ctx.params())
            for (auto& v : Tensor(p.tensor).mutable_value()) v += 0.1 * r.normal();
        worst["context"] = std::max(worst["context"], max_rel_error([&] {
            auto h = ctx.encode_batch(s0, g0);
            Tensor z = ad::reparameterize(h.mean, h.log_var, eps);
            return ad::mean(ad::square(ctx.decode_batch(z)));
        }, ctx.params()));

        for (Variant v : {Variant::int_cell, Variant::ext}) {
            auto m = GenModel::make(v, dims, r);
            for (auto& p : m.params())
                for (auto& x : Tensor(p.tensor).mutable_value()) x += 0.1 * r.normal();
            Tensor z = random_rows(2, 3), w = random_rows(2, 6);
            auto loss = [&] {
                auto roll = rollout_soft(m, z, 3, nullptr);
                Tensor acc = Tensor::scalar(0.0);
                for (std::size_t t = 0; t < 3; ++t)
                    acc = acc + ad::sum(ad::mul(roll.states[t], w)) + ad::mean(ad::log_softmax(roll.logits[t]));
                return acc;
            };
            worst[v == Variant::ext ? "ext" : "int"] =
                std::max(worst[v == Variant::ext ? "ext" : "int"], max_rel_error(loss, m.params()));
        }
        auto d = Discriminator::make(dims, r);
        for (auto& p : d.params())
            for (auto& x : Tensor(p.tensor).mutable_value()) x += 0.1 * r.normal();
        Tensor se = random_rows(4, 6), sg = random_rows(4, 6);
        Tensor ae = ad::softmax(random_rows(4, 5)), ag = ad::softmax(random_rows(4, 5));
        worst["discriminator"] = std::max(worst["discriminator"],
                                          max_rel_error([&] { return disc_loss(d, se, ae, sg, ag); }, d.params()));
    }
    bool ok = true;
    for (const auto& [name, err] : worst) {
        std::cout << name << " max_rel_error " << err << "\n";
        ok = ok && err < 1e-4;
    }
    return ok ? 0 : 1;
}

// --- plot ------------------------------------------------------------------

std::string svg_lines(const std::vector<std::string>& names, const std::vector<std::vector<double>>& series) {
    const double w = 640, h = 360, pad = 40;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& ys = series[k];
        if (ys.empty()) continue;
        auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
        const double span = *hi - *lo > 0 ? *hi - *lo : 1.0;
        o << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" points=\"";
        for (std::size_t i = 0; i < ys.size(); ++i) {
            const double x = pad + (w - 2 * pad) * (ys.size() > 1 ? double(i) / double(ys.size() - 1) : 0.5);
            const double y = h - pad - (h - 2 * pad) * (ys[i] - *lo) / span;
            o << x << "," << y << " ";
        }
        o << "\"/>\n<text x=\"" << pad << "\" y=\"" << 16 + 14 * k << "\" font-size=\"12\" fill=\"" << colors[k % 6]
          << "\">" << names[k] << " [" << *lo << ", " << *hi << "]</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

int run_plot(const std::string& log, const std::string& out) {
    auto rows = read_jsonl(log);
    if (rows.empty()) throw std::runtime_error(log + ": no records");
    std::vector<std::string> keys;
    for (auto it = rows.front().begin(); it != rows.front().end(); ++it)
        if (it.value().is_number()) keys.push_back(it.key());
    fs::create_directories(out);
    std::ostringstream csv;
    for (std::size_t i = 0; i < keys.size(); ++i) csv << (i ? "," : "") << keys[i];
    csv << "\n";
    std::vector<std::vector<double>> series(keys.size());
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < keys.size(); ++i) {
            const double v = r.value(keys[i], std::nan(""));
            csv << (i ? "," : "") << v;
            series[i].push_back(v);
        }
        csv << "\n";
    }
    const std::string stem = fs::path(log).stem().string();
    write_file(fs::path(out) / (stem + ".csv"), csv.str());
    std::vector<std::string> names;
    std::vector<std::vector<double>> picked;
    for (std::size_t i = 0; i < keys.size(); ++i)
        if (keys[i] != "epoch") {
            names.push_back(keys[i]);
            picked.push_back(series[i]);
        }
    write_file(fs::path(out) / (stem + ".svg"), svg_lines(names, picked));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* lvl = std::getenv("MGAIL_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));

    CLI::App app{"mgail: procedure and walk-through planning on synthetic instructional tasks"};
    app.require_subcommand(1);
    std::string stage = "cli";

    Common gen_c;
    auto* gen = app.add_subcommand("gen", "generate a world and its train/test trajectory files");
    add_common(gen, gen_c);

    Common train_c;
    std::string variant, ablate;
    bool no_ablate_override = true;
    auto* train = app.add_subcommand("train", "run the full pipeline and write artifacts");
    add_common(train, train_c);
    train->add_option("--variant", variant, "int|ext");
    train->add_option_function<std::string>(
        "--ablate", [&](const std::string& s) { ablate = s, no_ablate_override = false; },
        "comma list of no_reward,no_disc,no_her");

    std::string ckpt_path, queries_path, plan_out = "-";
    std::size_t samples = 1;
    std::string plan_mode = "mean";
    std::uint64_t plan_seed = 0;
    auto* plan = app.add_subcommand("plan", "procedure planning for JSONL queries {start, goal, T}");
    plan->add_option("--checkpoint", ckpt_path)->required();
    plan->add_option("--queries", queries_path)->required();
    plan->add_option("--samples", samples)->capture_default_str();
    plan->add_option("--mode", plan_mode, "mean|sample")->capture_default_str();
    plan->add_option("--seed", plan_seed)->capture_default_str();
    plan->add_option("--out", plan_out, "output JSONL ('-' for stdout)")->capture_default_str();

    bool greedy = false;
    auto* walk = app.add_subcommand("walk", "walk-through planning for JSONL queries {start, goal, candidates}");
    walk->add_option("--checkpoint", ckpt_path)->required();
    walk->add_option("--queries", queries_path)->required();
    walk->add_option("--out", plan_out, "output JSONL ('-' for stdout)")->capture_default_str();
    walk->add_flag("--greedy", greedy, "allow the greedy solver above the exact limit");

    Common eval_c;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split its config regenerates");
    eval->add_option("--checkpoint", ckpt_path)->required();
    add_common(eval, eval_c);

    std::size_t pairs = 100;
    std::string embed_out = "embed.csv";
    Common embed_c;
    auto* embed = app.add_subcommand("embed", "dump context means per task as CSV");
    embed->add_option("--checkpoint", ckpt_path)->required();
    embed->add_option("--pairs", pairs, "pairs per task")->capture_default_str();
    embed->add_option("--out", embed_out)->capture_default_str();

    std::size_t trials = 20;
    std::uint64_t gc_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "compare reverse-mode gradients with finite differences");
    gradcheck->add_option("--trials", trials)->capture_default_str();
    gradcheck->add_option("--seed", gc_seed)->capture_default_str();

    std::string plot_log, plot_out = "plots";
    auto* plot = app.add_subcommand("plot", "render a JSONL log to CSV and SVG");
    plot->add_option("log", plot_log)->required();
    plot->add_option("--out", plot_out)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            stage = "gen";
            auto cfg = load_config(gen_c);
            auto data = prepare_data(cfg);
            fs::create_directories(gen_c.out);
            json tasks = json::array();
            for (const auto& t : data.tasks) {
                json edges = json::array();
                for (auto [a, b] : t.precedence) edges.push_back({a, b});
                tasks.push_back({{"task_id", t.task_id}, {"steps", t.steps}, {"precedence", edges}});
            }
            write_file(fs::path(gen_c.out) / "world.json", json{{"config", to_json(cfg)}, {"tasks", tasks}}.dump(2));
            write_trajectories(fs::path(gen_c.out) / "train.jsonl", data.train);
            write_trajectories(fs::path(gen_c.out) / "test.jsonl", data.test);
            std::cout << "train " << data.train.size() << " (relabeled " << data.relabeled << ") test "
                      << data.test.size() << "\n";
        } else if (*train) {
            stage = "train";
            auto cfg = load_config(train_c);
            if (!variant.empty()) cfg.variant = parse_variant(variant);
            if (!no_ablate_override) cfg.ablations = Ablations::parse(ablate);
            auto r = run_experiment(cfg, fs::path(train_c.out));
            std::cout << metrics_json(r).dump(2) << "\n";
        } else if (*plan) {
            stage = "plan";
            auto ck = load_checkpoint(ckpt_path);
            std::ofstream file;
            std::ostream& os = output(plan_out, file);
            Rng rng(plan_seed);
            std::size_t i = 0;
            for (const auto& q : read_jsonl(queries_path)) {
                PlanQuery pq{to_vec(q.at("start")), to_vec(q.at("goal")), q.at("T").get<std::size_t>(),
                             plan_mode == "sample" ? ContextSource::sample : ContextSource::mean, samples};
                auto p = plan_procedure(ck.model, pq, rng.split(i++), ck.max_horizon);
                os << json{{"actions", p.actions}, {"walk_order", json::array()}, {"scores", {p.log_d}}}.dump()
                   << "\n";
            }
        } else if (*walk) {
            stage = "walk";
            auto ck = load_checkpoint(ckpt_path);
            std::ofstream file;
            std::ostream& os = output(plan_out, file);
            for (const auto& q : read_jsonl(queries_path)) {
                std::vector<Vec> cands;
                for (const auto& c : q.at("candidates")) cands.push_back(to_vec(c));
                auto p = walkthrough(ck.model, to_vec(q.at("start")), to_vec(q.at("goal")), cands, greedy);
                os << json{{"actions", json::array()}, {"walk_order", p.order}, {"scores", p.step_scores}}.dump()
                   << "\n";
            }
        } else if (*eval) {
            stage = "eval";
            auto ck = load_checkpoint(ckpt_path);
            auto cfg = experiment_config_from_json(ck.config);
            if (!eval_c.config.empty()) cfg.eval = load_experiment_config(eval_c.config).eval;
            auto data = prepare_data(cfg);
            auto res = evaluate(ck.model, make_queries(data.test, cfg.eval, cfg.seed), cfg);
            json j{{"model", to_json(res.model)},
                   {"uniform", to_json(res.uniform)},
                   {"uniform_walk_free", to_json(res.uniform_walk_free)}};
            fs::create_directories(eval_c.out);
            write_file(fs::path(eval_c.out) / "metrics.json", j.dump(2) + "\n");
            std::cout << j.dump(2) << "\n";
        } else if (*embed) {
            stage = "embed";
            auto ck = load_checkpoint(ckpt_path);
            auto cfg = experiment_config_from_json(ck.config);
            auto data = prepare_data(cfg);
            Rng rng = Rng(cfg.seed).split(40);
            auto rows = embed_dump(ck.model.context, data.test, pairs, rng);
            write_embed_csv(embed_out, rows);
            std::cout << rows.size() << " rows written to " << embed_out << "\n";
        } else if (*gradcheck) {
            stage = "gradcheck";
            return run_gradcheck(trials, gc_seed);
        } else if (*plot) {
            stage = "plot";
            return run_plot(plot_log, plot_out);
        }
    } catch (const ExperimentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: stage '" << stage << "': " << e.what() << "\n";
        return 2;
    }
    return 0;
}
