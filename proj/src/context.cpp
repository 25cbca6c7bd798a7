// SPDX-License-Identifier: Apache-2.0
#include "mgail/context.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace mgail {

ContextNet ContextNet::make(const ContextDims& dims, Rng& rng) {
    ContextNet n;
    n.dims_ = dims;
    n.enc_start_ = Mlp::make({dims.obs_dim, dims.hidden}, rng, Activation::tanh);
    n.enc_goal_ = Mlp::make({dims.obs_dim, dims.hidden}, rng, Activation::tanh);
    n.fusion_ = Linear::make(2 * dims.hidden, dims.hidden, rng);
    n.mean_head_ = Linear::make(dims.hidden, dims.latent_dim, rng, /*zero_init=*/true);
    n.log_var_head_ = Linear::make(dims.hidden, dims.latent_dim, rng, /*zero_init=*/true);
    n.decoder_ = Mlp::make({dims.latent_dim, dims.hidden, 2 * dims.obs_dim}, rng, Activation::tanh);
    return n;
}

PosteriorHeads ContextNet::encode_batch(const Tensor& start, const Tensor& goal) const {
    if (start.cols() != dims_.obs_dim || goal.cols() != dims_.obs_dim || start.rows() != goal.rows())
        throw ad::ShapeError("context encode: expected two [B, " + std::to_string(dims_.obs_dim) + "] inputs, got " +
                             ad::shape_str(start.shape()) + " and " + ad::shape_str(goal.shape()));
    Tensor hs = ad::tanh(enc_start_.forward(start));
    Tensor hg = ad::tanh(enc_goal_.forward(goal));
    Tensor h = ad::tanh(fusion_.forward(ad::concat_cols({hs, hg})));
    return {mean_head_.forward(h), ad::clamp(log_var_head_.forward(h), kContextLogVarMin, kContextLogVarMax)};
}

Tensor ContextNet::decode_batch(const Tensor& z) const { return decoder_.forward(z); }

ContextPosterior ContextNet::encode(const Vec& start, const Vec& goal) const {
    if (start.size() != dims_.obs_dim || goal.size() != dims_.obs_dim)
        throw std::invalid_argument("context encode: observation dimension " + std::to_string(start.size()) + "/" +
                                    std::to_string(goal.size()) + " != " + std::to_string(dims_.obs_dim));
    auto heads = encode_batch(Tensor::row(start), Tensor::row(goal));
    auto m = heads.mean.value();
    auto l = heads.log_var.value();
    return {Vec(m.begin(), m.end()), Vec(l.begin(), l.end())};
}

ParamList ContextNet::params() const {
    ParamList out;
    for (auto part : {enc_start_.params("enc_start"), enc_goal_.params("enc_goal"), fusion_.params("fusion"),
                      mean_head_.params("mean"), log_var_head_.params("log_var"), decoder_.params("decoder")})
        out.insert(out.end(), part.begin(), part.end());
    return out;
}

ContextVariable sample_context(const ContextPosterior& post, Rng& rng) {
    ContextVariable c;
    c.z.resize(post.mean.size());
    for (std::size_t i = 0; i < c.z.size(); ++i) {
        const double lv = std::clamp(post.log_var[i], kContextLogVarMin, kContextLogVarMax);
        c.z[i] = post.mean[i] + std::exp(0.5 * lv) * rng.normal();
    }
    return c;
}

ContextVariable posterior_mean(const ContextPosterior& post) { return {post.mean}; }

double gaussian_kl(const Vec& mean, const Vec& log_var) {
    double kl = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i)
        kl += 0.5 * (mean[i] * mean[i] + std::exp(log_var[i]) - 1.0 - log_var[i]);
    return kl;
}

std::vector<ObsPair> endpoint_pairs(const Dataset& dataset) {
    std::vector<ObsPair> out;
    out.reserve(dataset.size());
    for (const auto& t : dataset) out.push_back({t.start(), t.goal()});
    return out;
}

ElboTerms elbo_loss(const ContextNet& net, const std::vector<ObsPair>& batch, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("elbo_loss: empty batch");
    const std::size_t b = batch.size();
    const std::size_t d_o = net.dims().obs_dim;
    const std::size_t d_z = net.dims().latent_dim;
    std::vector<Vec> starts, goals, targets;
    for (const auto& p : batch) {
        starts.push_back(p.start);
        goals.push_back(p.goal);
        Vec t = p.start;
        t.insert(t.end(), p.goal.begin(), p.goal.end());
        targets.push_back(std::move(t));
    }
    auto heads = net.encode_batch(stack_rows(starts), stack_rows(goals));
    std::vector<double> eps(b * d_z);
    for (auto& e : eps) e = rng.normal();
    Tensor z = ad::reparameterize(heads.mean, heads.log_var, Tensor::from({b, d_z}, std::move(eps)));
    Tensor recon = net.decode_batch(z);
    Tensor sq = ad::square(ad::sub(recon, stack_rows(targets)));
    Tensor recon_per = ad::scale(ad::row_sum(sq), 0.5);  // [B,1]
    // 0.5 * (mu^2 + exp(lv) - 1 - lv)
    Tensor kl_el = ad::scale(ad::add_scalar(ad::sub(ad::add(ad::square(heads.mean), ad::exp(heads.log_var)),
                                                    heads.log_var),
                                            -1.0),
                             0.5);
    Tensor kl_per = ad::row_sum(kl_el);  // [B,1]
    ElboTerms out;
    out.loss = ad::mean(ad::add(recon_per, kl_per));
    auto rp = recon_per.value();
    auto kp = kl_per.value();
    out.reconstruction = std::accumulate(rp.begin(), rp.end(), 0.0) / static_cast<double>(b);
    out.kl = std::accumulate(kp.begin(), kp.end(), 0.0) / static_cast<double>(b);
    out.min_kl = *std::min_element(kp.begin(), kp.end());
    auto sv = sq.value();
    double goal_sq = 0.0;
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = d_o; j < 2 * d_o; ++j) goal_sq += sv[r * 2 * d_o + j];
    out.goal_reconstruction = 0.5 * goal_sq / static_cast<double>(b);
    return out;
}

ContextTrainReport train_context(ContextNet& net, const Dataset& dataset, const ContextTrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train_context: empty dataset");
    auto pairs = endpoint_pairs(dataset);
    ParamList params = net.params();
    ad::Adam opt(tensors_of(params), {.lr = cfg.lr});
    ParamList last_good = clone_params(params);
    Rng rng(cfg.seed);
    ContextTrainReport rep;
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        ContextEpoch e{.epoch = epoch, .min_kl = std::numeric_limits<double>::infinity()};
        std::size_t batches = 0;
        for (std::size_t i = 0; i < order.size(); i += bs) {
            std::vector<ObsPair> batch;
            for (std::size_t k = i; k < std::min(order.size(), i + bs); ++k) batch.push_back(pairs[order[k]]);
            auto terms = elbo_loss(net, batch, rng);
            opt.zero_grad();
            ad::backward(terms.loss);
            opt.step();
            e.loss += terms.loss.item();
            e.reconstruction += terms.reconstruction;
            e.goal_reconstruction += terms.goal_reconstruction;
            e.kl += terms.kl;
            e.min_kl = std::min(e.min_kl, terms.min_kl);
            ++batches;
        }
        const auto nb = static_cast<double>(batches);
        e.loss /= nb;
        e.reconstruction /= nb;
        e.goal_reconstruction /= nb;
        e.kl /= nb;
        if (!std::isfinite(e.loss)) {
            spdlog::warn("context training diverged at epoch {}; restoring epoch {}", epoch, epoch ? epoch - 1 : 0);
            copy_values(last_good, params);
            rep.diverged = true;
            break;
        }
        if (e.min_kl < -1e-9) throw std::logic_error("context training: negative KL " + std::to_string(e.min_kl));
        copy_values(params, last_good);
        rep.curve.push_back(e);
        spdlog::debug("context epoch {} loss {:.5f} recon {:.5f} kl {:.5f}", epoch, e.loss, e.reconstruction, e.kl);
    }
    return rep;
}

}  // namespace mgail
