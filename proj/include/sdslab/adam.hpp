#pragma once

// Adam with bias correction; one instance owns the moment buffers for one
// flat parameter vector.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sdslab {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    Adam() = default;
    Adam(size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw std::invalid_argument("Adam::step: size mismatch");
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (size_t i = 0; i < params.size(); ++i) {
            double g = grad[i];
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
            params[i] -= cfg_.lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.eps);
        }
    }

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return t_; }

  private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

}  // namespace sdslab
