#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sdslab/eval.hpp"

using namespace sdslab;
using namespace sdslab::eval;

namespace {

synthdata::Corpus probe_corpus() {
    synthdata::CorpusConfig cfg;
    cfg.subjects = 3;
    cfg.poses = 8;
    cfg.vary_hat = true;
    cfg.resolution = 16;
    cfg.seed = 2024;
    return synthdata::build_corpus(cfg);
}

Probe trained_probe() {
    ProbeConfig cfg;
    cfg.feature_dim = 16;
    cfg.iterations = 700;
    cfg.batch_size = 32;
    cfg.lr = 5e-3;
    cfg.seed = 1;
    return train_probe(probe_corpus(), cfg);
}

}  // namespace

TEST_CASE("probe forward math on hand-set weights") {
    Probe p(2, 2, 2);
    // First feature reads pixel 0, second reads pixel 1.
    p.w1 = {1.0, 0.0, 0.0, 1.0};
    p.b1 = {0.0, 0.0};
    Grid img(1, 2);
    img.v = {1.0, 0.5};  // inputs remapped to 2x-1 -> {1, 0}
    auto f = p.features(img);
    CHECK(f[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(0.0).epsilon(1e-12));

    p.w_attr = {2.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    p.b_attr = {0.0, 0.0, 0.0};
    double z = 2.0 * std::tanh(1.0);
    CHECK(p.attr_prob(f, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-12));
    CHECK(p.attr_prob(f, 1) == doctest::Approx(0.5).epsilon(1e-12));

    p.w_id = {1.0, 0.0, -1.0, 0.0};
    p.b_id = {0.0, 0.0};
    auto probs = p.identity_probs(f);
    CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-12));
    double t = std::tanh(1.0);
    double expect0 = std::exp(t) / (std::exp(t) + std::exp(-t));
    CHECK(probs[0] == doctest::Approx(expect0).epsilon(1e-12));
}

TEST_CASE("trained probe separates attributes and identities") {
    auto corpus = probe_corpus();
    auto p = trained_probe();

    std::vector<Grid> hats, plain, subj0;
    for (const auto& s : corpus.samples) {
        if (s.attrs.hat)
            hats.push_back(s.image);
        else
            plain.push_back(s.image);
        if (s.subject_id == 0 && !s.attrs.hat) subj0.push_back(s.image);
    }
    double a_hat = edit_alignment(p, hats, 0);
    double a_plain = edit_alignment(p, plain, 0);
    CHECK(a_hat > 0.85);
    CHECK(a_plain < 0.15);
    CHECK(identity_score(p, subj0, 0) > 0.85);
    CHECK(identity_score(p, subj0, 1) < 0.15);
}

TEST_CASE("probe save/load round trip preserves behavior") {
    auto p = trained_probe();
    fs::path dir = fs::temp_directory_path() / "sdslab_probe";
    fs::remove_all(dir);
    p.save(dir);
    auto q = Probe::load(dir);
    CHECK(q.input_dim == p.input_dim);
    CHECK(q.feature_dim == p.feature_dim);
    CHECK(q.subjects == p.subjects);
    auto corpus = probe_corpus();
    auto fa = p.features(corpus.samples[0].image);
    auto fb = q.features(corpus.samples[0].image);
    for (size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == doctest::Approx(fb[i]).epsilon(1e-5));
    fs::remove_all(dir);
}

TEST_CASE("probe throws below the accuracy floor") {
    ProbeConfig cfg;
    cfg.feature_dim = 16;
    cfg.iterations = 0;  // untrained probe cannot pass the gate
    cfg.seed = 1;
    CHECK_THROWS_AS(train_probe(probe_corpus(), cfg), std::runtime_error);
    CHECK_THROWS_AS(train_probe(synthdata::Corpus{}, cfg), std::invalid_argument);
}

TEST_CASE("jacobi eigensolver on a 2x2 oracle") {
    std::vector<double> V;
    auto evals = detail::jacobi_eigen({2.0, 1.0, 1.0, 2.0}, 2, V);
    std::sort(evals.begin(), evals.end());
    CHECK(evals[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(evals[1] == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("psd square root of a diagonal matrix") {
    auto r = detail::sqrt_psd({4.0, 0.0, 0.0, 9.0}, 2);
    CHECK(r[0] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(r[1] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(r[2] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(r[3] == doctest::Approx(3.0).epsilon(1e-10));
    // Negative eigenvalues (round-off) clamp to zero instead of NaN.
    auto n = detail::sqrt_psd({-1e-12, 0.0, 0.0, 1.0}, 2);
    CHECK(std::isfinite(n[0]));
}

TEST_CASE("frechet distance: zero on identical sets, symmetric, 1-d closed form") {
    std::vector<std::vector<double>> a = {{0.0}, {1.0}, {2.0}};
    std::vector<std::vector<double>> b = {{5.0}, {5.0}, {5.0}};
    // Gaussians N(1, 1) vs N(5, 0): (1-5)^2 + (1-0)^2 = 17.
    CHECK(frechet_features(a, b) == doctest::Approx(17.0).epsilon(1e-6));
    CHECK(frechet_features(b, a) == doctest::Approx(17.0).epsilon(1e-6));
    CHECK(frechet_features(a, a) == doctest::Approx(0.0).epsilon(1e-9));

    // 2-d diagonal case: independent coordinates add up.
    std::vector<std::vector<double>> c, d;
    for (double x : {-1.0, 0.0, 1.0}) c.push_back({x, 2.0 * x});
    for (double x : {-1.0, 0.0, 1.0}) d.push_back({x + 3.0, 2.0 * x});
    CHECK(frechet_features(c, d) == doctest::Approx(9.0).epsilon(1e-6));
}

TEST_CASE("frechet over probe features ranks corruption monotonically") {
    auto corpus = probe_corpus();
    auto p = trained_probe();
    std::vector<Grid> ref, mild, wild;
    SplitMix64 rng(5);
    for (size_t i = 0; i < corpus.samples.size(); i += 2) {
        const Grid& img = corpus.samples[i].image;
        ref.push_back(img);
        Grid m = img, w = img;
        for (size_t j = 0; j < m.v.size(); ++j) {
            double n = rng.gaussian();
            m.v[j] = clamp01(m.v[j] + 0.05 * n);
            w.v[j] = clamp01(w.v[j] + 0.50 * n);
        }
        mild.push_back(std::move(m));
        wild.push_back(std::move(w));
    }
    double d_self = frechet_distance(p, ref, ref);
    double d_mild = frechet_distance(p, ref, mild);
    double d_wild = frechet_distance(p, ref, wild);
    CHECK(d_self == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(d_mild > d_self);
    CHECK(d_wild > d_mild);
}

TEST_CASE("structure IoU oracles") {
    Grid a(2, 2, 0.0), b(2, 2, 0.0);
    CHECK(structure_iou(a, b, 0.04) == 1.0);  // both empty
    a.v = {1.0, 1.0, 0.0, 0.0};
    b.v = {1.0, 0.0, 1.0, 0.0};
    CHECK(structure_iou(a, b, 0.04) == doctest::Approx(1.0 / 3.0));
    CHECK(structure_iou(a, a, 0.04) == 1.0);
    b.v = {0.0, 0.0, 1.0, 1.0};
    CHECK(structure_iou(a, b, 0.04) == 0.0);
    Grid wrong(2, 3, 0.0);
    CHECK_THROWS_AS(structure_iou(a, wrong, 0.04), std::invalid_argument);
}
