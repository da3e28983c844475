#pragma once

// The edit loop: forward-noise the canvas render, assemble the blended
// editing score, and descend mu(t) * (Psi - eps) through the canvas warp.
// No gradient flows through the score networks.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdslab/adam.hpp"
#include "sdslab/anneal.hpp"
#include "sdslab/canvas.hpp"
#include "sdslab/core.hpp"
#include "sdslab/diffusion.hpp"
#include "sdslab/eval.hpp"
#include "sdslab/guidance.hpp"
#include "sdslab/io.hpp"
#include "sdslab/schedule.hpp"
#include "sdslab/scorenet.hpp"

namespace sdslab::distill {

using scorenet::ScoreNet;

enum class MuMode { constant, one_minus_alpha_bar, fantasia };

struct EditConfig {
    std::vector<int> prompt_edit{scorenet::kTokenClass, scorenet::kTokenHat};
    std::vector<int> prompt_id{scorenet::kTokenClass, scorenet::kTokenSks};
    long iterations = 3000;
    double lr = 1e-2;
    MuMode mu_mode = MuMode::one_minus_alpha_bar;
    guidance::GuidanceConfig guidance;
    anneal::AnnealConfig anneal;
    uint64_t seed = 0;
    bool use_structure = true;     // false: the SDS / P-SDS ablation arms
    bool use_personalized = true;  // false: v forced to 0 (SDS / NA-SDS arms)
    double divergence_threshold = 1e4;
    int probe_every = 100;
    // Canvas mask-ring width during the edit. Accessory growth happens through
    // dedicated atlas pixels, so the ring is pure halo surface: the w-weighted
    // conditional-minus-null field carries a positive DC bias there at every
    // timestep, and Adam's per-texel normalization saturates any ring texel it
    // can reach. 0 keeps the warp domain tight.
    int mask_dilation = 0;

    void validate() const {
        if (iterations != anneal.N)
            throw std::invalid_argument("EditConfig: iterations must equal anneal.N");
        bool has_id = false;
        for (int t : prompt_id) has_id = has_id || t == scorenet::kTokenSks;
        if (use_personalized && !has_id)
            throw std::invalid_argument("EditConfig: prompt_id must contain the identity token");
    }
};

inline double mu_weight(MuMode mode, const diffusion::NoiseSchedule& sched, int t) {
    switch (mode) {
        case MuMode::constant: return 1.0;
        case MuMode::one_minus_alpha_bar: return 1.0 - sched.alpha_bar_at(t);
        case MuMode::fantasia: {
            double sigma2 = 1.0 - sched.alpha_bar_at(t);
            return sigma2 * std::sqrt(1.0 - sigma2);
        }
    }
    return 1.0;
}

// [OP] sds_gradient: elementwise mu(t) * (psi - eps).
inline Grid sds_gradient(const Grid& psi, const Grid& eps, double mu_t) {
    require_same_shape(psi, eps, "sds_gradient");
    Grid g(psi.h, psi.w);
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = mu_t * (psi.v[i] - eps.v[i]);
    return g;
}

struct EditHooks {
    const eval::Probe* probe = nullptr;
    int target_attr = 0;
    int subject_id = 0;
};

struct EditResult {
    CsvWriter trace{{"iteration", "t", "v", "grad_norm", "probe_edit", "probe_identity"}};
    long iterations_run = 0;
};

// [OP] edit: drives the canvas toward the edit prompt. The corpus supplies
// the subject's poses and structure maps; the canvas is mutated in place.
inline EditResult edit(canvas::Canvas& cv, const ScoreNet& base_net, const ScoreNet& pers_net,
                       const synthdata::Corpus& corpus, const diffusion::NoiseSchedule& sched,
                       const EditConfig& cfg, const EditHooks& hooks = {}) {
    cfg.validate();
    if (corpus.samples.empty()) throw std::invalid_argument("edit: empty corpus");

    cv.mask_dilation = cfg.mask_dilation;
    EditResult result;
    SplitMix64 rng(cfg.seed);
    Adam opt(cv.texture.size(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    int diverged_streak = 0;

    for (long tau = 0; tau < cfg.iterations; ++tau) {
        const auto& s = corpus.samples[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(corpus.samples.size()) - 1))];
        Grid x = cv.render(s.pose);

        auto st = anneal::window_at(tau, cfg.anneal);
        int t = anneal::sample_t(st, cfg.anneal, rng);
        double v = cfg.use_personalized ? anneal::v_at(tau, cfg.anneal) : 0.0;

        Grid eps = diffusion::gaussian_grid(x.h, x.w, rng);
        auto noised = diffusion::add_noise(x, t, eps, sched);

        guidance::GuidanceConfig gcfg = cfg.guidance;
        gcfg.k = st.k;
        if (!cfg.use_structure) {
            gcfg.cond_scale_base = 0.0;
            gcfg.cond_scale_personalized = 0.0;
        }
        Grid psi = guidance::blended_score(base_net, pers_net, noised.z_t, t, cfg.prompt_edit,
                                           cfg.prompt_id, s.structure, gcfg, v);

        double mu = mu_weight(cfg.mu_mode, sched, t);
        Grid pixel_grad = sds_gradient(psi, eps, mu);
        Grid tex_grad = cv.backprop_to_texture(pixel_grad, s.pose);
        double gn = 0.0;
        for (double g : tex_grad.v) gn += g * g;
        gn = std::sqrt(gn);
        if (gn > cfg.divergence_threshold) {
            if (++diverged_streak >= 100)
                throw diffusion::DivergenceError(
                    static_cast<int>(tau),
                    "edit: gradient norm above threshold for 100 consecutive iterations (tau=" +
                        std::to_string(tau) + ", norm=" + std::to_string(gn) + ")");
        } else {
            diverged_streak = 0;
        }
        cv.step(tex_grad, opt);

        double probe_edit = -1.0, probe_id = -1.0;
        if (hooks.probe && (tau % cfg.probe_every == 0 || tau + 1 == cfg.iterations)) {
            std::vector<Grid> renders;
            for (int j = 0; j < std::min<int>(8, static_cast<int>(corpus.samples.size())); ++j)
                renders.push_back(cv.render(corpus.samples[static_cast<size_t>(j)].pose));
            probe_edit = eval::edit_alignment(*hooks.probe, renders, hooks.target_attr);
            probe_id = eval::identity_score(*hooks.probe, renders, hooks.subject_id);
        }
        result.trace.add_row({static_cast<double>(tau), static_cast<double>(t), v, gn, probe_edit,
                              probe_id});
        result.iterations_run = tau + 1;
    }
    return result;
}

}  // namespace sdslab::distill
