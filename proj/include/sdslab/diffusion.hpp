#pragma once

// Denoiser training on a figure corpus and ancestral DDPM sampling.

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sdslab/adam.hpp"
#include "sdslab/core.hpp"
#include "sdslab/io.hpp"
#include "sdslab/schedule.hpp"
#include "sdslab/scorenet.hpp"
#include "sdslab/synthdata.hpp"

namespace sdslab::diffusion {

using scorenet::BatchItem;
using scorenet::Condition;
using scorenet::ScoreNet;

enum class TargetMode { eps, clean };
enum class WeightMode { uniform, fantasia };

struct TrainConfig {
    int iterations = 2000;
    int batch_size = 16;
    double lr = 1e-3;
    uint64_t seed = 0;
    double null_prob = 0.1;  // null-prompt substitution so CFG has a real branch
    // Probability of pairing an accessorized sample with the structure map of
    // its accessory-free sibling (same subject and pose). Teaches the net
    // that attribute tokens override the silhouette, which is exactly the
    // regime the edit loop drives it into.
    double mismatch_prob = 0.5;
    TargetMode target = TargetMode::eps;
    WeightMode weight = WeightMode::uniform;
    int threads = 1;
};

// Per-timestep loss weight; fantasia mode is sigma^2 * sqrt(1 - sigma^2)
// with sigma^2 = 1 - alpha_bar_t.
inline double loss_weight(WeightMode mode, const NoiseSchedule& sched, int t) {
    if (mode == WeightMode::uniform) return 1.0;
    double sigma2 = 1.0 - sched.alpha_bar_at(t);
    return sigma2 * std::sqrt(1.0 - sigma2);
}

// Prompt for a figure: class token plus one token per active attribute.
inline std::vector<int> sample_tokens(const synthdata::Attributes& attrs) {
    std::vector<int> tokens{scorenet::kTokenClass};
    if (attrs.hat) tokens.push_back(scorenet::kTokenHat);
    if (attrs.stripes) tokens.push_back(scorenet::kTokenStripes);
    if (attrs.held_item) tokens.push_back(scorenet::kTokenItem);
    return tokens;
}

struct DivergenceError : std::runtime_error {
    int iteration;
    DivergenceError(int iter, const std::string& msg)
        : std::runtime_error(msg), iteration(iter) {}
};

namespace detail {

// Deterministic multi-thread gradient accumulation: each worker owns a
// contiguous slice of the batch and its own buffer; buffers are summed in
// worker order, so results differ from single-threaded only by
// floating-point reassociation.
inline std::vector<double> batch_gradients(const ScoreNet& net,
                                           const std::vector<BatchItem>& batch, int threads,
                                           double* loss_out) {
    if (threads <= 1 || batch.size() < 2) return scorenet::param_gradients(net, batch, loss_out);
    int n_workers = std::min<int>(threads, static_cast<int>(batch.size()));
    std::vector<std::vector<double>> grads(n_workers);
    std::vector<double> losses(n_workers, 0.0);
    std::vector<std::thread> pool;
    size_t per = (batch.size() + n_workers - 1) / n_workers;
    for (int wi = 0; wi < n_workers; ++wi) {
        pool.emplace_back([&, wi] {
            size_t lo = wi * per, hi = std::min(batch.size(), lo + per);
            std::vector<BatchItem> slice(batch.begin() + static_cast<long>(lo),
                                         batch.begin() + static_cast<long>(hi));
            if (slice.empty()) {
                grads[wi].assign(net.param_count(), 0.0);
                return;
            }
            grads[wi] = scorenet::param_gradients(net, slice, &losses[wi]);
            double frac = static_cast<double>(slice.size()) / static_cast<double>(batch.size());
            for (double& g : grads[wi]) g *= frac;
            losses[wi] *= frac;
        });
    }
    for (auto& th : pool) th.join();
    std::vector<double> total = std::move(grads[0]);
    double loss = losses[0];
    for (int wi = 1; wi < n_workers; ++wi) {
        for (size_t i = 0; i < total.size(); ++i) total[i] += grads[wi][i];
        loss += losses[wi];
    }
    if (loss_out) *loss_out = loss;
    return total;
}

}  // namespace detail

// Draws one training batch from the corpus.
inline std::vector<BatchItem> draw_batch(const ScoreNet& net, const synthdata::Corpus& corpus,
                                         const NoiseSchedule& sched, const TrainConfig& cfg,
                                         SplitMix64& rng,
                                         const std::vector<int>* override_tokens = nullptr) {
    // Accessory-free sibling per (subject, pose) for structure mismatching.
    std::map<std::pair<int, double>, const synthdata::FigureSample*> plain;
    if (cfg.mismatch_prob > 0.0)
        for (const auto& s : corpus.samples)
            if (s.attrs == corpus.config.base_attrs) plain[{s.subject_id, s.pose}] = &s;

    std::vector<BatchItem> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
        const auto& s = corpus.samples[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(corpus.samples.size()) - 1))];
        int t = static_cast<int>(rng.uniform_int(1, sched.T));
        Grid eps = gaussian_grid(s.image.h, s.image.w, rng);
        NoisedState st = add_noise(s.image, t, eps, sched);

        BatchItem item;
        item.z_t = std::move(st.z_t);
        item.t = t;
        item.cond.tokens = override_tokens ? *override_tokens : sample_tokens(s.attrs);
        if (rng.next_double() < cfg.null_prob) item.cond.tokens.clear();
        item.cond.structure = &s.structure;
        if (cfg.mismatch_prob > 0.0 && !(s.attrs == corpus.config.base_attrs) &&
            rng.next_double() < cfg.mismatch_prob) {
            auto it = plain.find({s.subject_id, s.pose});
            if (it != plain.end()) item.cond.structure = &it->second->structure;
        }
        item.target = cfg.target == TargetMode::eps ? std::move(eps) : s.image;
        item.weight = loss_weight(cfg.weight, sched, t);
        (void)net;
        batch.push_back(std::move(item));
    }
    return batch;
}

struct TrainResult {
    ScoreNet net;
    CsvWriter trace{{"iteration", "loss"}};
};

// [OP] train_denoiser: minimizes the conditional denoising objective.
inline TrainResult train_denoiser(const ScoreNet& base, const synthdata::Corpus& corpus,
                                  const NoiseSchedule& sched, const TrainConfig& cfg) {
    if (corpus.samples.empty()) throw std::invalid_argument("train_denoiser: empty corpus");
    TrainResult result{base};
    if (cfg.iterations == 0) return result;

    SplitMix64 rng(cfg.seed);
    Adam opt(result.net.param_count(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        auto batch = draw_batch(result.net, corpus, sched, cfg, rng);
        double loss = 0.0;
        auto grad = detail::batch_gradients(result.net, batch, cfg.threads, &loss);
        if (!std::isfinite(loss))
            throw DivergenceError(iter, "train_denoiser: loss diverged at iteration " +
                                            std::to_string(iter));
        opt.step(result.net.params, grad);
        result.trace.add_row({static_cast<double>(iter), loss});
    }
    return result;
}

// [OP] sample: ancestral DDPM reverse chain, final clamp to [0,1].
// Templated on the network type so closed-form denoisers can be substituted.
template <class NetT>
Grid sample(const NetT& net, const Condition& cond, const NoiseSchedule& sched,
            uint64_t seed, int res) {
    SplitMix64 rng(seed);
    Grid z = gaussian_grid(res, res, rng);
    for (int t = sched.T; t >= 1; --t) {
        Grid eps_hat = net.forward(z, t, cond);
        double ab = sched.alpha_bar_at(t);
        double ab_prev = t > 1 ? sched.alpha_bar_at(t - 1) : 1.0;
        double beta = sched.beta_at(t);
        double alpha = 1.0 - beta;
        double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
        double coef = beta / std::sqrt(1.0 - ab);
        double post_var = t > 1 ? beta * (1.0 - ab_prev) / (1.0 - ab) : 0.0;
        double sigma = std::sqrt(post_var);
        for (size_t i = 0; i < z.v.size(); ++i) {
            double mean = inv_sqrt_alpha * (z.v[i] - coef * eps_hat.v[i]);
            z.v[i] = t > 1 ? mean + sigma * rng.gaussian() : mean;
        }
    }
    for (double& x : z.v) x = clamp01(x);
    return z;
}

}  // namespace sdslab::diffusion
