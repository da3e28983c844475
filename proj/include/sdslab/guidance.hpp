#pragma once

// Score assembly: classifier-free guidance and the blended editing score
//   Psi = w((1-v) base(z_t, c_edit, n) + v pers(z_t, c_id, n)) + (1-w) base(z_t, n)
// with v active only for t strictly above the threshold k. The structure map
// conditions every branch; the base branches use cond_scale_base and the
// personalized branch cond_scale_personalized.

#include <stdexcept>

#include "sdslab/core.hpp"
#include "sdslab/scorenet.hpp"

namespace sdslab::guidance {

using scorenet::Condition;
using scorenet::ScoreNet;

struct GuidanceConfig {
    double w = 20.0;
    double v0 = 0.3;
    double k = 750.0;
    double cond_scale_base = 0.5;
    double cond_scale_personalized = 1.0;

    void validate() const {
        if (w < 1.0) throw std::invalid_argument("GuidanceConfig: w must be >= 1");
        if (!(0.0 <= v0 && v0 < 1.0)) throw std::invalid_argument("GuidanceConfig: need 0 <= v0 < 1");
    }
};

// [OP] cfg_score: w * net(z_t, c, n) + (1 - w) * net(z_t, null, n).
// Templated on the network type so tests can substitute stub branches.
template <class NetT>
Grid cfg_score(const NetT& net, const Grid& z_t, int t,
               const std::vector<int>& tokens, const Grid* structure, double w,
               double cond_scale = -1.0) {
    Condition cond{tokens, structure};
    Condition null_cond{{}, structure};
    Grid c = net.forward(z_t, t, cond, nullptr, cond_scale);
    Grid u = net.forward(z_t, t, null_cond, nullptr, cond_scale);
    Grid out(c.h, c.w);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = w * c.v[i] + (1.0 - w) * u.v[i];
    return out;
}

// [OP] blended_score (the PNA-SDS editing score). The structure map is
// mandatory here; dropping it is only reachable through cond-scale zeroing
// (the P-SDS ablation arm).
template <class BaseNetT, class PersNetT>
Grid blended_score(const BaseNetT& base_net, const PersNetT& pers_net, const Grid& z_t,
                   int t, const std::vector<int>& c_edit, const std::vector<int>& c_id,
                   const Grid& structure, const GuidanceConfig& gcfg, double v_active) {
    gcfg.validate();
    require_same_shape(z_t, structure, "blended_score");
    double v = static_cast<double>(t) > gcfg.k ? v_active : 0.0;

    Grid edit = base_net.forward(z_t, t, Condition{c_edit, &structure}, nullptr,
                                 gcfg.cond_scale_base);
    Grid uncond = base_net.forward(z_t, t, Condition{{}, &structure}, nullptr,
                                   gcfg.cond_scale_base);
    Grid out(z_t.h, z_t.w);
    if (v == 0.0) {
        for (size_t i = 0; i < out.v.size(); ++i)
            out.v[i] = gcfg.w * edit.v[i] + (1.0 - gcfg.w) * uncond.v[i];
        return out;
    }
    Grid pers = pers_net.forward(z_t, t, Condition{c_id, &structure}, nullptr,
                                 gcfg.cond_scale_personalized);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = gcfg.w * ((1.0 - v) * edit.v[i] + v * pers.v[i]) + (1.0 - gcfg.w) * uncond.v[i];
    return out;
}

}  // namespace sdslab::guidance
