#pragma once

// Windowed root timestep annealing: the sampling window [t2, t1] with
// blending threshold k = t1 - window/2 decays as
//   t1 = t_max - (t_max - t_min) * sqrt(tau / N),
// freezes once the raw t1 reaches the cease value, and the personalized-model
// weight v decays linearly to v_end after the freeze.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdslab/core.hpp"

namespace sdslab::anneal {

struct AnnealConfig {
    double t_max = 980.0;
    double t_min = 20.0;
    double window = 500.0;
    long N = 3000;
    double cease_t1 = 500.0;
    double v0 = 0.3;
    double v_end = 0.0;

    bool enabled = true;      // disabled: static window [t_min, t_max], static k
    double static_k = 750.0;  // used when annealing is disabled
    bool hifa_mode = false;   // ablation arm: deterministic t = t1, fixed k = 600
    double hifa_k = 600.0;

    void validate() const {
        if (N < 1) throw std::invalid_argument("AnnealConfig: N must be >= 1");
        if (!(t_min < cease_t1 && cease_t1 < t_max))
            throw std::invalid_argument("AnnealConfig: need t_min < cease_t1 < t_max");
        if (window <= 0.0) throw std::invalid_argument("AnnealConfig: window must be positive");
    }
};

struct AnnealState {
    long tau = 0;
    double t1 = 0.0, t2 = 0.0, k = 0.0;
    double v = 0.0;
    bool ceased = false;
};

// Fraction of training at which raw t1 crosses the cease value.
inline double cease_fraction(const AnnealConfig& cfg) {
    double r = (cfg.t_max - cfg.cease_t1) / (cfg.t_max - cfg.t_min);
    return r * r;
}

// [OP] window_at
inline AnnealState window_at(long tau, const AnnealConfig& cfg) {
    cfg.validate();
    if (tau < 0 || tau > cfg.N) throw std::out_of_range("window_at: tau outside [0, N]");
    AnnealState st;
    st.tau = tau;

    if (!cfg.enabled) {
        st.t1 = cfg.t_max;
        st.t2 = cfg.t_min;
        st.k = cfg.hifa_mode ? cfg.hifa_k : cfg.static_k;
        return st;
    }

    double frac = static_cast<double>(tau) / static_cast<double>(cfg.N);
    double raw_t1 = cfg.t_max - (cfg.t_max - cfg.t_min) * std::sqrt(frac);
    if (raw_t1 <= cfg.cease_t1) {
        st.ceased = true;
        st.t1 = cfg.cease_t1;
    } else {
        st.t1 = raw_t1;
    }
    st.k = st.t1 - cfg.window / 2.0;
    st.t2 = st.t1 - cfg.window;
    // Safety clamp for non-default configs; with defaults the cease rule
    // already keeps the window above t_min.
    st.k = std::max(st.k, cfg.t_min);
    st.t2 = std::max(st.t2, cfg.t_min);
    if (cfg.hifa_mode) st.k = cfg.hifa_k;
    return st;
}

// [OP] sample_t: integer t uniform on the clamped window.
inline int sample_t(const AnnealState& st, const AnnealConfig& cfg, SplitMix64& rng) {
    if (cfg.hifa_mode && cfg.enabled) {
        // HiFA reproduction arm: deterministic t = t1.
        return static_cast<int>(std::lround(std::clamp(st.t1, cfg.t_min, cfg.t_max)));
    }
    int lo = static_cast<int>(std::ceil(std::max(st.t2, cfg.t_min)));
    int hi = static_cast<int>(std::floor(std::min(st.t1, cfg.t_max)));
    if (hi < lo) hi = lo;
    return static_cast<int>(rng.uniform_int(lo, hi));
}

// [OP] v_at: v0 until the cease iteration, then linear decay to v_end at N.
inline double v_at(long tau, const AnnealConfig& cfg) {
    cfg.validate();
    if (tau < 0 || tau > cfg.N) throw std::out_of_range("v_at: tau outside [0, N]");
    if (!cfg.enabled) return cfg.v0;
    double tau_c = cease_fraction(cfg) * static_cast<double>(cfg.N);
    if (tau <= tau_c) return cfg.v0;
    double frac = (static_cast<double>(tau) - tau_c) / (static_cast<double>(cfg.N) - tau_c);
    return cfg.v0 + (cfg.v_end - cfg.v0) * frac;
}

inline AnnealState state_at(long tau, const AnnealConfig& cfg) {
    AnnealState st = window_at(tau, cfg);
    st.v = v_at(tau, cfg);
    return st;
}

}  // namespace sdslab::anneal
