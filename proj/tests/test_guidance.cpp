#include <doctest.h>

#include <cmath>
#include <limits>

#include "sdslab/guidance.hpp"
#include "sdslab/schedule.hpp"

using namespace sdslab;
using namespace sdslab::guidance;
using namespace sdslab::scorenet;

namespace {

NetConfig tiny_cfg() {
    NetConfig cfg;
    cfg.levels = 1;
    cfg.base_channels = 2;
    cfg.emb_dim = 4;
    cfg.tokens = 7;
    cfg.timesteps = 1000;
    return cfg;
}

// All-zero net whose output head bias is c: forward returns c everywhere,
// regardless of input, tokens, or structure.
ScoreNet constant_net(double c) {
    ScoreNet net{tiny_cfg()};
    const auto& e = net.entry("conv_out/b");
    net.params[e.offset] = c;
    return net;
}

}  // namespace

TEST_CASE("guidance config validation") {
    GuidanceConfig g;
    CHECK_NOTHROW(g.validate());
    g.w = 0.5;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g = GuidanceConfig{};
    g.v0 = 1.0;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("cfg_score algebra on constant nets") {
    ScoreNet net = constant_net(1.0);
    Grid z(4, 4, 0.2), s(4, 4, 1.0);
    Grid out = cfg_score(net, z, 400, {kTokenClass}, &s, 20.0);
    // c = u = 1, so w*c + (1-w)*u = 1 for any w.
    for (double v : out.v) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cfg_score matches a hand-built combination on a real net") {
    ScoreNet net = ScoreNet::init(tiny_cfg(), 7);
    SplitMix64 rng(3);
    Grid z = diffusion::gaussian_grid(4, 4, rng);
    Grid s(4, 4, 0.0);
    s(1, 1) = 1.0;
    s(2, 2) = 0.5;
    std::vector<int> tokens{kTokenClass, kTokenHat};
    double w = 20.0;
    Grid got = cfg_score(net, z, 333, tokens, &s, w, 0.5);
    Grid c = net.forward(z, 333, Condition{tokens, &s}, nullptr, 0.5);
    Grid u = net.forward(z, 333, Condition{{}, &s}, nullptr, 0.5);
    for (size_t i = 0; i < got.v.size(); ++i)
        CHECK(got.v[i] == doctest::Approx(w * c.v[i] + (1.0 - w) * u.v[i]).epsilon(1e-12));
}

TEST_CASE("blended score algebra with constant branch outputs") {
    ScoreNet base = constant_net(1.0);
    ScoreNet pers = constant_net(2.0);
    Grid z(4, 4, 0.0), s(4, 4, 1.0);
    GuidanceConfig g;  // w = 20, k = 750
    SUBCASE("above threshold the personalized branch blends in") {
        Grid out = blended_score(base, pers, z, 800, {kTokenClass, kTokenHat},
                                 {kTokenClass, kTokenSks}, s, g, 0.3);
        // w((1-v)*1 + v*2) + (1-w)*1 = 20*1.3 - 19 = 7.
        for (double v : out.v) CHECK(v == doctest::Approx(7.0).epsilon(1e-12));
    }
    SUBCASE("at or below threshold it collapses to plain guidance") {
        for (int t : {750, 300}) {
            Grid out = blended_score(base, pers, z, t, {kTokenClass, kTokenHat},
                                     {kTokenClass, kTokenSks}, s, g, 0.3);
            for (double v : out.v) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("threshold is strict: t = k inactive, t = k + 1 active") {
    ScoreNet base = constant_net(1.0);
    ScoreNet pers = constant_net(2.0);
    Grid z(4, 4, 0.0), s(4, 4, 0.0);
    GuidanceConfig g;
    Grid at_k = blended_score(base, pers, z, 750, {kTokenClass}, {kTokenClass, kTokenSks}, s, g, 0.3);
    Grid above = blended_score(base, pers, z, 751, {kTokenClass}, {kTokenClass, kTokenSks}, s, g, 0.3);
    CHECK(at_k.v[0] == doctest::Approx(1.0));
    CHECK(above.v[0] == doctest::Approx(7.0));
}

TEST_CASE("inactive blending never evaluates the personalized net") {
    ScoreNet base = constant_net(0.5);
    ScoreNet pers{tiny_cfg()};
    for (double& p : pers.params) p = std::numeric_limits<double>::quiet_NaN();
    Grid z(4, 4, 0.0), s(4, 4, 0.0);
    GuidanceConfig g;
    Grid out = blended_score(base, pers, z, 100, {kTokenClass}, {kTokenClass, kTokenSks}, s, g, 0.3);
    for (double v : out.v) CHECK(std::isfinite(v));
    // v_active = 0 must behave identically even above the threshold.
    Grid out2 = blended_score(base, pers, z, 900, {kTokenClass}, {kTokenClass, kTokenSks}, s, g, 0.0);
    for (double v : out2.v) CHECK(std::isfinite(v));
}

TEST_CASE("blended score equals its hand-built composition on real nets") {
    ScoreNet base = ScoreNet::init(tiny_cfg(), 11);
    ScoreNet pers = ScoreNet::init(tiny_cfg(), 12);
    SplitMix64 rng(4);
    Grid z = diffusion::gaussian_grid(4, 4, rng);
    Grid s = diffusion::gaussian_grid(4, 4, rng);
    GuidanceConfig g;
    std::vector<int> c_edit{kTokenClass, kTokenHat}, c_id{kTokenClass, kTokenSks};
    int t = 800;
    double v = 0.3;
    Grid got = blended_score(base, pers, z, t, c_edit, c_id, s, g, v);
    Grid e = base.forward(z, t, Condition{c_edit, &s}, nullptr, g.cond_scale_base);
    Grid u = base.forward(z, t, Condition{{}, &s}, nullptr, g.cond_scale_base);
    Grid p = pers.forward(z, t, Condition{c_id, &s}, nullptr, g.cond_scale_personalized);
    for (size_t i = 0; i < got.v.size(); ++i) {
        double expect = g.w * ((1.0 - v) * e.v[i] + v * p.v[i]) + (1.0 - g.w) * u.v[i];
        CHECK(got.v[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("blended score insists on matching structure shape") {
    ScoreNet base = constant_net(0.0), pers = constant_net(0.0);
    Grid z(4, 4, 0.0), s(4, 2, 0.0);
    GuidanceConfig g;
    CHECK_THROWS_AS(blended_score(base, pers, z, 800, {kTokenClass}, {kTokenClass, kTokenSks}, s, g, 0.3),
                    std::invalid_argument);
}
