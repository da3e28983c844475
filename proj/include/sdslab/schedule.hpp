#pragma once

// Discrete-time noise schedule and the forward noising map
// z_t = sqrt(alpha_bar_t) z + sqrt(1 - alpha_bar_t) eps.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sdslab/core.hpp"

namespace sdslab::diffusion {

struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[t-1] = beta_t, t in [1, T]
    std::vector<double> alpha_bar;  // alpha_bar[t-1] = prod_{i<=t} (1 - beta_i)

    double beta_at(int t) const { return beta.at(static_cast<size_t>(t) - 1); }
    double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<size_t>(t) - 1); }
};

// [OP] make_schedule: linear beta interpolation.
inline NoiseSchedule make_schedule(int T = 1000, double beta_min = 1e-4, double beta_max = 0.02) {
    if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
    if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_min < beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.beta[i] = beta_min + (beta_max - beta_min) * static_cast<double>(i) / (T - 1);
        prod *= 1.0 - s.beta[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

struct NoisedState {
    Grid z_t;
    int t = 0;
    Grid eps;
};

// [OP] add_noise (forward noising)
inline NoisedState add_noise(const Grid& z, int t, const Grid& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw std::out_of_range("add_noise: t out of [1, T]");
    require_same_shape(z, eps, "add_noise");
    NoisedState st;
    st.t = t;
    st.eps = eps;
    st.z_t = Grid(z.h, z.w);
    double a = std::sqrt(sched.alpha_bar_at(t));
    double b = std::sqrt(1.0 - sched.alpha_bar_at(t));
    for (size_t i = 0; i < z.v.size(); ++i) st.z_t.v[i] = a * z.v[i] + b * eps.v[i];
    return st;
}

inline Grid gaussian_grid(int h, int w, SplitMix64& rng) {
    Grid g(h, w);
    for (double& x : g.v) x = rng.gaussian();
    return g;
}

}  // namespace sdslab::diffusion
