#pragma once

// Personalization: fine-tune a copy of the base denoiser on one subject with
// the identity token, regularized by class-prior preservation on samples
// drawn from the frozen base net.

#include <cstdio>
#include <stdexcept>
#include <vector>

#include "sdslab/adam.hpp"
#include "sdslab/core.hpp"
#include "sdslab/diffusion.hpp"
#include "sdslab/io.hpp"
#include "sdslab/schedule.hpp"
#include "sdslab/scorenet.hpp"
#include "sdslab/synthdata.hpp"

namespace sdslab::personalize {

using diffusion::NoiseSchedule;
using scorenet::BatchItem;
using scorenet::Condition;
using scorenet::ScoreNet;

// Class samples from the frozen base net, each generated under a structure
// map borrowed from a random corpus sample so they stay pose-conditioned.
struct PriorCorpus {
    std::vector<Grid> images;
    std::vector<Grid> structures;
};

// [OP] make_prior_corpus
inline PriorCorpus make_prior_corpus(const ScoreNet& base_net, const std::vector<int>& class_tokens,
                                     int n, uint64_t seed, const synthdata::Corpus& corpus,
                                     const NoiseSchedule& sched, bool net_trained = true) {
    if (n < 1) throw std::invalid_argument("make_prior_corpus: n must be >= 1");
    if (!net_trained)
        std::fprintf(stderr, "make_prior_corpus: warning: base net has no training trace\n");
    PriorCorpus prior;
    SplitMix64 rng(seed);
    int res = corpus.resolution();
    for (int i = 0; i < n; ++i) {
        const auto& src = corpus.samples[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(corpus.samples.size()) - 1))];
        Condition cond{class_tokens, &src.structure};
        prior.images.push_back(diffusion::sample(base_net, cond, sched, rng.next_u64(), res));
        prior.structures.push_back(src.structure);
    }
    return prior;
}

inline void save_prior_corpus(const PriorCorpus& prior, const fs::path& dir) {
    int n = static_cast<int>(prior.images.size());
    int res = prior.images.empty() ? 0 : prior.images[0].h;
    std::vector<double> images, structures;
    for (const auto& g : prior.images) images.insert(images.end(), g.v.begin(), g.v.end());
    for (const auto& g : prior.structures)
        structures.insert(structures.end(), g.v.begin(), g.v.end());
    TensorContainer c;
    c.put("images", {n, res, res}, std::move(images));
    c.put("structures", {n, res, res}, std::move(structures));
    c.meta() = {{"kind", "prior_corpus"}, {"count", n}, {"resolution", res}};
    c.save(dir);
}

inline PriorCorpus load_prior_corpus(const fs::path& dir) {
    TensorContainer c = TensorContainer::load(dir);
    int n = c.meta().at("count");
    int res = c.meta().at("resolution");
    PriorCorpus prior;
    const auto& im = c.data("images");
    const auto& st = c.data("structures");
    for (int i = 0; i < n; ++i) {
        Grid g(res, res), s(res, res);
        std::copy(im.begin() + static_cast<long>(i) * res * res,
                  im.begin() + static_cast<long>(i + 1) * res * res, g.v.begin());
        std::copy(st.begin() + static_cast<long>(i) * res * res,
                  st.begin() + static_cast<long>(i + 1) * res * res, s.v.begin());
        prior.images.push_back(std::move(g));
        prior.structures.push_back(std::move(s));
    }
    return prior;
}

struct FinetuneConfig {
    int iterations = 2000;
    int batch_size = 16;
    double lr = 1e-4;
    double lambda = 1.0;  // prior-preservation weight
    // The personalized copy trains and runs at its own conditioning scale
    // (the blended score evaluates it at full strength).
    double cond_scale = 1.0;
    uint64_t seed = 0;
    diffusion::TargetMode target = diffusion::TargetMode::eps;
    diffusion::WeightMode weight = diffusion::WeightMode::fantasia;
    int threads = 1;
};

struct FinetuneResult {
    ScoreNet net;
    CsvWriter trace{{"iteration", "loss", "subject_loss", "prior_loss"}};
};

// [OP] finetune: total loss = subject term + lambda * prior term. The base
// net is taken by value; the caller's instance is never mutated.
inline FinetuneResult finetune(const ScoreNet& base_net, const synthdata::Corpus& subject_corpus,
                               const PriorCorpus& prior_corpus, const NoiseSchedule& sched,
                               const FinetuneConfig& cfg) {
    if (subject_corpus.samples.empty())
        throw std::invalid_argument("finetune: empty subject corpus");
    FinetuneResult result{base_net};
    result.net.cfg.cond_scale = cfg.cond_scale;
    if (cfg.iterations == 0) return result;
    if (cfg.lambda != 0.0 && prior_corpus.images.empty())
        throw std::invalid_argument("finetune: lambda != 0 requires a prior corpus");

    const std::vector<int> id_tokens{scorenet::kTokenClass, scorenet::kTokenSks};
    const std::vector<int> class_tokens{scorenet::kTokenClass};

    SplitMix64 rng(cfg.seed);
    Adam opt(result.net.param_count(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        // Subject batch under the identity prompt.
        std::vector<BatchItem> subject_batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& s = subject_corpus.samples[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(subject_corpus.samples.size()) - 1))];
            int t = static_cast<int>(rng.uniform_int(1, sched.T));
            Grid eps = diffusion::gaussian_grid(s.image.h, s.image.w, rng);
            auto st = diffusion::add_noise(s.image, t, eps, sched);
            BatchItem item;
            item.z_t = std::move(st.z_t);
            item.t = t;
            item.cond = Condition{id_tokens, &s.structure};
            item.target = cfg.target == diffusion::TargetMode::eps ? std::move(eps) : s.image;
            item.weight = diffusion::loss_weight(cfg.weight, sched, t);
            subject_batch.push_back(std::move(item));
        }
        double subject_loss = 0.0;
        auto grad = scorenet::param_gradients(result.net, subject_batch, &subject_loss);

        double prior_loss = 0.0;
        if (cfg.lambda != 0.0) {
            std::vector<BatchItem> prior_batch;
            for (int b = 0; b < cfg.batch_size; ++b) {
                size_t pi = static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int64_t>(prior_corpus.images.size()) - 1));
                const Grid& img = prior_corpus.images[pi];
                int t = static_cast<int>(rng.uniform_int(1, sched.T));
                Grid eps = diffusion::gaussian_grid(img.h, img.w, rng);
                auto st = diffusion::add_noise(img, t, eps, sched);
                BatchItem item;
                item.z_t = std::move(st.z_t);
                item.t = t;
                item.cond = Condition{class_tokens, &prior_corpus.structures[pi]};
                item.target = cfg.target == diffusion::TargetMode::eps ? std::move(eps) : img;
                item.weight = diffusion::loss_weight(cfg.weight, sched, t);
                prior_batch.push_back(std::move(item));
            }
            auto prior_grad = scorenet::param_gradients(result.net, prior_batch, &prior_loss);
            for (size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.lambda * prior_grad[i];
        }

        double total = subject_loss + cfg.lambda * prior_loss;
        if (!std::isfinite(total))
            throw diffusion::DivergenceError(iter, "finetune: loss diverged at iteration " +
                                                       std::to_string(iter));
        opt.step(result.net.params, grad);
        result.trace.add_row({static_cast<double>(iter), total, subject_loss, prior_loss});
    }
    return result;
}

}  // namespace sdslab::personalize
