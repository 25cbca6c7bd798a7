// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "mgail/context.hpp"
#include "support.hpp"

using namespace mgail;
using namespace mgail::test;

namespace {

const ContextDims kSmall{6, 3, 7};

double log_normal_pdf(double x, double mu, double lv) {
    return -0.5 * (std::log(2 * M_PI) + lv + (x - mu) * (x - mu) / std::exp(lv));
}

}  // namespace

TEST_CASE("closed-form KL") {
    CHECK(gaussian_kl({0.0, 0.0}, {0.0, 0.0}) == 0.0);
    CHECK(gaussian_kl({1.0}, {0.0}) == doctest::Approx(0.5));
    CHECK(gaussian_kl({0.0}, {std::log(4.0)}) == doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))));
}

TEST_CASE("KL agrees with a Monte Carlo estimate") {
    Rng rng(1);
    const Vec mu{0.7, -1.2, 0.3};
    const Vec lv{-0.5, 0.4, 0.1};
    const ContextPosterior post{mu, lv};
    const int n = 1000000;
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        auto z = sample_context(post, rng).z;
        for (std::size_t i = 0; i < 3; ++i) acc += log_normal_pdf(z[i], mu[i], lv[i]) - log_normal_pdf(z[i], 0, 0);
    }
    const double mc = acc / n;
    const double kl = gaussian_kl(mu, lv);
    CHECK(std::abs(mc - kl) / kl < 0.01);
}

TEST_CASE("KL is non-negative for random posteriors") {
    Rng rng(2);
    for (int k = 0; k < 10000; ++k) {
        Vec mu(4), lv(4);
        for (auto& x : mu) x = rng.normal(0, 3);
        for (auto& x : lv) x = rng.uniform(kContextLogVarMin, kContextLogVarMax);
        REQUIRE(gaussian_kl(mu, lv) >= 0.0);
    }
}

TEST_CASE("context sampling moments") {
    Rng rng(3);
    const ContextPosterior post{Vec(4, 0.0), Vec(4, 0.0)};
    const int n = 100000;
    Vec sum(4, 0.0), sq(4, 0.0);
    for (int k = 0; k < n; ++k) {
        auto z = sample_context(post, rng).z;
        for (std::size_t i = 0; i < 4; ++i) {
            sum[i] += z[i];
            sq[i] += z[i] * z[i];
        }
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const double m = sum[i] / n;
        CHECK(std::abs(m) < 0.02);
        CHECK(std::abs(sq[i] / n - m * m - 1.0) < 0.05);
    }
}

TEST_CASE("clamped minimum variance gives z close to the mean") {
    Rng rng(4);
    const ContextPosterior post{{1.0, -2.0}, {-1e9, -1e9}};
    auto z = sample_context(post, rng).z;
    CHECK(std::abs(z[0] - 1.0) < 6 * std::exp(0.5 * kContextLogVarMin));
    CHECK(std::abs(z[1] + 2.0) < 6 * std::exp(0.5 * kContextLogVarMin));
    CHECK(posterior_mean(post).z == post.mean);
}

TEST_CASE("ELBO gradient matches finite differences") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        auto net = ContextNet::make(kSmall, rng);
        jitter(net.params(), rng);
        std::vector<ObsPair> batch;
        for (int b = 0; b < 3; ++b) batch.push_back({to_vec(random_tensor(1, 6, rng)), to_vec(random_tensor(1, 6, rng))});
        // Same eps on every evaluation.
        auto loss = [&] {
            Rng fixed(77);
            return elbo_loss(net, batch, fixed).loss;
        };
        CHECK(max_rel_error(loss, net.params()) < 1e-4);
    }
}

TEST_CASE("ELBO terms agree with a direct computation") {
    Rng rng(6);
    auto net = ContextNet::make(kSmall, rng);
    jitter(net.params(), rng);
    std::vector<ObsPair> batch{{to_vec(random_tensor(1, 6, rng)), to_vec(random_tensor(1, 6, rng))},
                               {to_vec(random_tensor(1, 6, rng)), to_vec(random_tensor(1, 6, rng))}};
    Rng r1(9);
    auto terms = elbo_loss(net, batch, r1);

    Rng r2(9);
    double recon = 0.0, kl = 0.0;
    for (const auto& p : batch) {
        auto post = net.encode(p.start, p.goal);
        Vec z(3);
        for (std::size_t i = 0; i < 3; ++i) z[i] = post.mean[i] + std::exp(0.5 * post.log_var[i]) * r2.normal();
        auto x = to_vec(net.decode_batch(Tensor::row(z)));
        for (std::size_t i = 0; i < 6; ++i) {
            recon += 0.5 * (x[i] - p.start[i]) * (x[i] - p.start[i]);
            recon += 0.5 * (x[6 + i] - p.goal[i]) * (x[6 + i] - p.goal[i]);
        }
        kl += gaussian_kl(post.mean, post.log_var);
    }
    CHECK(terms.reconstruction == doctest::Approx(recon / 2));
    CHECK(terms.kl == doctest::Approx(kl / 2));
    CHECK(terms.loss.item() == doctest::Approx((recon + kl) / 2));
    CHECK(terms.min_kl >= 0.0);
}

TEST_CASE("encoder rejects wrong dimensions") {
    Rng rng(7);
    auto net = ContextNet::make(kSmall, rng);
    CHECK_THROWS(net.encode(Vec(5, 0.0), Vec(6, 0.0)));
    CHECK_THROWS_AS(net.encode_batch(Tensor::zeros({2, 6}), Tensor::zeros({3, 6})), ad::ShapeError);
    CHECK_THROWS_AS(elbo_loss(net, {}, rng), std::invalid_argument);
}

TEST_CASE("one epoch at lr 0 leaves parameters unchanged") {
    Rng rng(8);
    auto net = ContextNet::make(kSmall, rng);
    auto before = clone_params(net.params());
    Trajectory t{.task_id = 0, .observations = {Vec(6, 0.1), Vec(6, 0.2)}, .actions = {0}};
    train_context(net, {t}, {.epochs = 1, .batch_size = 1, .lr = 0.0});
    auto after = net.params();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(to_vec(after[i].tensor) == to_vec(before[i].tensor));
}

TEST_CASE("context training lowers the loss and keeps KL non-negative") {
    WorldConfig wc;
    wc.num_tasks = 4;
    wc.action_vocab = 12;
    wc.obs_dim = 8;
    wc.seed = 1;
    World w(wc);
    Dataset d = w.sample_dataset(30, Rng(2));
    Rng rng(3);
    auto net = ContextNet::make({8, 3, 16}, rng);
    auto rep = train_context(net, d, {.epochs = 50, .batch_size = 32, .lr = 3e-3, .seed = 4});
    REQUIRE(rep.curve.size() == 50);
    CHECK_FALSE(rep.diverged);
    CHECK(rep.curve.back().loss < rep.curve.front().loss);
    for (const auto& e : rep.curve) CHECK(e.min_kl >= 0.0);
}

TEST_CASE("goal reconstruction approaches zero on a noise-free world") {
    WorldConfig wc;
    wc.num_tasks = 3;
    wc.action_vocab = 12;
    wc.obs_dim = 8;
    wc.noise_sigma = 0.0;
    wc.seed = 5;
    World w(wc);
    Dataset d = w.sample_dataset(20, Rng(6));
    Rng rng(7);
    auto net = ContextNet::make({8, 4, 32}, rng);
    auto rep = train_context(net, d, {.epochs = 300, .batch_size = 16, .lr = 3e-3, .seed = 8});
    // every goal of a task is the same point; compare against its spread
    double spread = 0.0;
    Vec mean(8, 0.0);
    for (const auto& t : d)
        for (std::size_t i = 0; i < 8; ++i) mean[i] += t.goal()[i] / static_cast<double>(d.size());
    for (const auto& t : d)
        for (std::size_t i = 0; i < 8; ++i) spread += 0.5 * (t.goal()[i] - mean[i]) * (t.goal()[i] - mean[i]);
    spread /= static_cast<double>(d.size());
    CHECK(rep.curve.back().goal_reconstruction < 0.05 * spread);
}
