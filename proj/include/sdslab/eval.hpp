#pragma once

// Metric analogs on the synthetic domain: a small supervised probe whose
// heads provide attribute-alignment and identity scores, whose penultimate
// features feed a Frechet distance, plus a structure IoU.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sdslab/adam.hpp"
#include "sdslab/core.hpp"
#include "sdslab/io.hpp"
#include "sdslab/synthdata.hpp"

namespace sdslab::eval {

constexpr int kAttrHeads = 3;  // hat, stripes, held_item

// Two-layer MLP: tanh feature layer (dimension F) shared by per-attribute
// sigmoid heads and a softmax identity head.
class Probe {
  public:
    int input_dim = 0;
    int feature_dim = 32;
    int subjects = 0;
    std::vector<double> w1, b1;          // [F, D], [F]
    std::vector<double> w_attr, b_attr;  // [3, F], [3]
    std::vector<double> w_id, b_id;      // [S, F], [S]

    Probe() = default;
    Probe(int d, int f, int s) : input_dim(d), feature_dim(f), subjects(s) {
        w1.assign(static_cast<size_t>(f) * d, 0.0);
        b1.assign(static_cast<size_t>(f), 0.0);
        w_attr.assign(static_cast<size_t>(kAttrHeads) * f, 0.0);
        b_attr.assign(kAttrHeads, 0.0);
        w_id.assign(static_cast<size_t>(s) * f, 0.0);
        b_id.assign(static_cast<size_t>(s), 0.0);
    }

    std::vector<double> features(const Grid& img) const {
        if (static_cast<int>(img.v.size()) != input_dim)
            throw std::invalid_argument("Probe: image size mismatch");
        std::vector<double> f(static_cast<size_t>(feature_dim));
        for (int i = 0; i < feature_dim; ++i) {
            double acc = b1[static_cast<size_t>(i)];
            const double* w = w1.data() + static_cast<size_t>(i) * input_dim;
            for (int j = 0; j < input_dim; ++j) acc += w[j] * (2.0 * img.v[static_cast<size_t>(j)] - 1.0);
            f[static_cast<size_t>(i)] = std::tanh(acc);
        }
        return f;
    }

    double attr_prob(const std::vector<double>& feat, int attr) const {
        double z = b_attr[static_cast<size_t>(attr)];
        const double* w = w_attr.data() + static_cast<size_t>(attr) * feature_dim;
        for (int i = 0; i < feature_dim; ++i) z += w[i] * feat[static_cast<size_t>(i)];
        return 1.0 / (1.0 + std::exp(-z));
    }

    std::vector<double> identity_probs(const std::vector<double>& feat) const {
        std::vector<double> z(static_cast<size_t>(subjects));
        double zmax = -1e300;
        for (int s = 0; s < subjects; ++s) {
            double acc = b_id[static_cast<size_t>(s)];
            const double* w = w_id.data() + static_cast<size_t>(s) * feature_dim;
            for (int i = 0; i < feature_dim; ++i) acc += w[i] * feat[static_cast<size_t>(i)];
            z[static_cast<size_t>(s)] = acc;
            zmax = std::max(zmax, acc);
        }
        double sum = 0.0;
        for (double& x : z) {
            x = std::exp(x - zmax);
            sum += x;
        }
        for (double& x : z) x /= sum;
        return z;
    }

    void save(const fs::path& dir) const {
        TensorContainer c;
        c.put("w1", {feature_dim, input_dim}, w1);
        c.put("b1", {feature_dim}, b1);
        c.put("w_attr", {kAttrHeads, feature_dim}, w_attr);
        c.put("b_attr", {kAttrHeads}, b_attr);
        c.put("w_id", {subjects, feature_dim}, w_id);
        c.put("b_id", {subjects}, b_id);
        c.meta() = {{"kind", "probe"},
                    {"input_dim", input_dim},
                    {"feature_dim", feature_dim},
                    {"subjects", subjects}};
        c.save(dir);
    }

    static Probe load(const fs::path& dir) {
        TensorContainer c = TensorContainer::load(dir);
        Probe p(c.meta().at("input_dim"), c.meta().at("feature_dim"), c.meta().at("subjects"));
        p.w1 = c.data("w1");
        p.b1 = c.data("b1");
        p.w_attr = c.data("w_attr");
        p.b_attr = c.data("b_attr");
        p.w_id = c.data("w_id");
        p.b_id = c.data("b_id");
        return p;
    }
};

struct ProbeConfig {
    int feature_dim = 32;
    int iterations = 1500;
    int batch_size = 32;
    double lr = 5e-3;
    uint64_t seed = 0;
    double min_accuracy = 0.9;  // hard floor; metrics are meaningless below it
};

namespace detail {

// Every fourth sample is held out for the accuracy gate.
inline bool held_out(size_t idx) { return idx % 4 == 3; }

struct ProbeGrad {
    std::vector<double> w1, b1, w_attr, b_attr, w_id, b_id;
};

}  // namespace detail

// [OP] train_probe: supervised training on a labeled corpus, held-out
// accuracy gate per attribute head and for identity.
inline Probe train_probe(const synthdata::Corpus& corpus, const ProbeConfig& cfg) {
    if (corpus.samples.empty()) throw std::invalid_argument("train_probe: empty corpus");
    const int D = corpus.resolution() * corpus.resolution();
    const int F = cfg.feature_dim;
    const int S = static_cast<int>(corpus.subjects.size());
    Probe p(D, F, S);

    SplitMix64 rng(cfg.seed);
    double w1_std = 1.0 / std::sqrt(static_cast<double>(D));
    for (double& w : p.w1) w = rng.gaussian() * w1_std;
    double w2_std = 1.0 / std::sqrt(static_cast<double>(F));
    for (double& w : p.w_attr) w = rng.gaussian() * w2_std;
    for (double& w : p.w_id) w = rng.gaussian() * w2_std;

    std::vector<size_t> train_idx;
    for (size_t i = 0; i < corpus.samples.size(); ++i)
        if (!detail::held_out(i)) train_idx.push_back(i);

    // Flat parameter view for one shared Adam instance.
    auto all_params = [&p]() {
        std::vector<double*> v;
        for (auto* vec : {&p.w1, &p.b1, &p.w_attr, &p.b_attr, &p.w_id, &p.b_id})
            for (double& x : *vec) v.push_back(&x);
        return v;
    };
    auto views = all_params();
    std::vector<double> flat(views.size()), grad(views.size());
    Adam opt(flat.size(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& s = corpus.samples[train_idx[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(train_idx.size()) - 1))]];
            std::vector<double> x(static_cast<size_t>(D));
            for (int j = 0; j < D; ++j) x[static_cast<size_t>(j)] = 2.0 * s.image.v[static_cast<size_t>(j)] - 1.0;

            // Forward
            std::vector<double> pre(static_cast<size_t>(F)), feat(static_cast<size_t>(F));
            for (int i = 0; i < F; ++i) {
                double acc = p.b1[static_cast<size_t>(i)];
                const double* w = p.w1.data() + static_cast<size_t>(i) * D;
                for (int j = 0; j < D; ++j) acc += w[j] * x[static_cast<size_t>(j)];
                pre[static_cast<size_t>(i)] = acc;
                feat[static_cast<size_t>(i)] = std::tanh(acc);
            }
            double target_attr[kAttrHeads] = {s.attrs.hat ? 1.0 : 0.0, s.attrs.stripes ? 1.0 : 0.0,
                                              s.attrs.held_item ? 1.0 : 0.0};
            auto id_probs = p.identity_probs(feat);

            // Backward into feature gradient, then shared layer.
            std::vector<double> d_feat(static_cast<size_t>(F), 0.0);
            size_t off_wattr = p.w1.size() + p.b1.size();
            size_t off_battr = off_wattr + p.w_attr.size();
            size_t off_wid = off_battr + p.b_attr.size();
            size_t off_bid = off_wid + p.w_id.size();
            for (int a = 0; a < kAttrHeads; ++a) {
                double prob = p.attr_prob(feat, a);
                double dz = prob - target_attr[a];  // d(BCE)/d(logit)
                grad[off_battr + static_cast<size_t>(a)] += dz;
                for (int i = 0; i < F; ++i) {
                    grad[off_wattr + static_cast<size_t>(a) * F + i] += dz * feat[static_cast<size_t>(i)];
                    d_feat[static_cast<size_t>(i)] += dz * p.w_attr[static_cast<size_t>(a) * F + i];
                }
            }
            for (int sj = 0; sj < S; ++sj) {
                double dz = id_probs[static_cast<size_t>(sj)] - (sj == s.subject_id ? 1.0 : 0.0);
                grad[off_bid + static_cast<size_t>(sj)] += dz;
                for (int i = 0; i < F; ++i) {
                    grad[off_wid + static_cast<size_t>(sj) * F + i] += dz * feat[static_cast<size_t>(i)];
                    d_feat[static_cast<size_t>(i)] += dz * p.w_id[static_cast<size_t>(sj) * F + i];
                }
            }
            for (int i = 0; i < F; ++i) {
                double dz = d_feat[static_cast<size_t>(i)] *
                            (1.0 - feat[static_cast<size_t>(i)] * feat[static_cast<size_t>(i)]);
                grad[static_cast<size_t>(p.w1.size()) + static_cast<size_t>(i)] += dz;
                for (int j = 0; j < D; ++j)
                    grad[static_cast<size_t>(i) * D + j] += dz * x[static_cast<size_t>(j)];
            }
        }
        for (double& g : grad) g /= cfg.batch_size;
        for (size_t i = 0; i < views.size(); ++i) flat[i] = *views[i];
        opt.step(flat, grad);
        for (size_t i = 0; i < views.size(); ++i) *views[i] = flat[i];
    }

    // Held-out accuracy gate.
    int n_held = 0;
    int attr_correct[kAttrHeads] = {0, 0, 0};
    int id_correct = 0;
    for (size_t i = 0; i < corpus.samples.size(); ++i) {
        if (!detail::held_out(i)) continue;
        const auto& s = corpus.samples[i];
        auto feat = p.features(s.image);
        ++n_held;
        double targets[kAttrHeads] = {s.attrs.hat ? 1.0 : 0.0, s.attrs.stripes ? 1.0 : 0.0,
                                      s.attrs.held_item ? 1.0 : 0.0};
        for (int a = 0; a < kAttrHeads; ++a)
            if ((p.attr_prob(feat, a) > 0.5) == (targets[a] > 0.5)) ++attr_correct[a];
        auto id_probs = p.identity_probs(feat);
        int best = static_cast<int>(std::max_element(id_probs.begin(), id_probs.end()) -
                                    id_probs.begin());
        if (best == s.subject_id) ++id_correct;
    }
    if (n_held > 0) {
        for (int a = 0; a < kAttrHeads; ++a)
            if (static_cast<double>(attr_correct[a]) / n_held < cfg.min_accuracy)
                throw std::runtime_error("train_probe: attribute head " + std::to_string(a) +
                                         " below accuracy floor");
        if (S > 1 && static_cast<double>(id_correct) / n_held < cfg.min_accuracy)
            throw std::runtime_error("train_probe: identity head below accuracy floor");
    }
    return p;
}

// [OP] edit_alignment: mean predicted probability of the target attribute.
inline double edit_alignment(const Probe& probe, const std::vector<Grid>& renders, int attr) {
    if (renders.empty()) throw std::invalid_argument("edit_alignment: no renders");
    double total = 0.0;
    for (const auto& r : renders) total += probe.attr_prob(probe.features(r), attr);
    return total / static_cast<double>(renders.size());
}

// [OP] identity_score: mean probability of the given subject id.
inline double identity_score(const Probe& probe, const std::vector<Grid>& renders, int subject_id) {
    if (renders.empty()) throw std::invalid_argument("identity_score: no renders");
    double total = 0.0;
    for (const auto& r : renders)
        total += probe.identity_probs(probe.features(r))[static_cast<size_t>(subject_id)];
    return total / static_cast<double>(renders.size());
}

// ---------------------------------------------------------------------------
// Frechet distance between Gaussian feature fits.
// ---------------------------------------------------------------------------
namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Returns eigenvalues; V gets the eigenvectors as columns.
inline std::vector<double> jacobi_eigen(std::vector<double> a, int n, std::vector<double>& V) {
    V.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) V[static_cast<size_t>(i) * n + i] = 1.0;
    auto A = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    auto Vv = [&](int i, int j) -> double& { return V[static_cast<size_t>(i) * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
        if (off < 1e-24) break;
        for (int i = 0; i < n - 1; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (std::abs(A(i, j)) < 1e-300) continue;
                double theta = (A(j, j) - A(i, i)) / (2.0 * A(i, j));
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < n; ++k) {
                    double aik = A(i, k), ajk = A(j, k);
                    A(i, k) = c * aik - s * ajk;
                    A(j, k) = s * aik + c * ajk;
                }
                for (int k = 0; k < n; ++k) {
                    double aki = A(k, i), akj = A(k, j);
                    A(k, i) = c * aki - s * akj;
                    A(k, j) = s * aki + c * akj;
                }
                for (int k = 0; k < n; ++k) {
                    double vki = Vv(k, i), vkj = Vv(k, j);
                    Vv(k, i) = c * vki - s * vkj;
                    Vv(k, j) = s * vki + c * vkj;
                }
            }
        }
    }
    std::vector<double> evals(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) evals[static_cast<size_t>(i)] = A(i, i);
    return evals;
}

// PSD square root via eigendecomposition, eigenvalues clamped at zero.
inline std::vector<double> sqrt_psd(const std::vector<double>& m, int n) {
    std::vector<double> V;
    auto evals = jacobi_eigen(m, n, V);
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int e = 0; e < n; ++e) {
        double lam = evals[static_cast<size_t>(e)];
        double s = lam > 0.0 ? std::sqrt(lam) : 0.0;
        if (s == 0.0) continue;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] +=
                    s * V[static_cast<size_t>(i) * n + e] * V[static_cast<size_t>(j) * n + e];
    }
    return out;
}

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int n) {
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double aik = a[static_cast<size_t>(i) * n + k];
            if (aik == 0.0) continue;
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] += aik * b[static_cast<size_t>(k) * n + j];
        }
    return out;
}

struct GaussianFit {
    std::vector<double> mean;
    std::vector<double> cov;  // row-major F x F
};

inline GaussianFit fit_gaussian(const std::vector<std::vector<double>>& feats, double ridge) {
    int n = static_cast<int>(feats.size());
    int f = static_cast<int>(feats[0].size());
    GaussianFit g;
    g.mean.assign(static_cast<size_t>(f), 0.0);
    for (const auto& x : feats)
        for (int i = 0; i < f; ++i) g.mean[static_cast<size_t>(i)] += x[static_cast<size_t>(i)];
    for (double& m : g.mean) m /= n;
    g.cov.assign(static_cast<size_t>(f) * f, 0.0);
    for (const auto& x : feats)
        for (int i = 0; i < f; ++i)
            for (int j = 0; j < f; ++j)
                g.cov[static_cast<size_t>(i) * f + j] += (x[static_cast<size_t>(i)] - g.mean[static_cast<size_t>(i)]) *
                                                         (x[static_cast<size_t>(j)] - g.mean[static_cast<size_t>(j)]);
    double denom = n > 1 ? n - 1 : 1;
    for (double& c : g.cov) c /= denom;
    for (int i = 0; i < f; ++i) g.cov[static_cast<size_t>(i) * f + i] += ridge;
    return g;
}

}  // namespace detail

// Frechet distance between Gaussian fits of two feature sets:
// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
inline double frechet_features(const std::vector<std::vector<double>>& a,
                               const std::vector<std::vector<double>>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("frechet: empty feature set");
    int f = static_cast<int>(a[0].size());
    // Shrinkage ridge when either set is rank-deficient.
    double ridge = (static_cast<int>(a.size()) <= f || static_cast<int>(b.size()) <= f) ? 1e-4 : 0.0;
    auto ga = detail::fit_gaussian(a, ridge);
    auto gb = detail::fit_gaussian(b, ridge);

    double d2 = 0.0;
    for (int i = 0; i < f; ++i) {
        double d = ga.mean[static_cast<size_t>(i)] - gb.mean[static_cast<size_t>(i)];
        d2 += d * d;
    }
    auto sqrt_a = detail::sqrt_psd(ga.cov, f);
    auto inner = detail::matmul(detail::matmul(sqrt_a, gb.cov, f), sqrt_a, f);
    // Symmetrize against round-off before the second square root.
    for (int i = 0; i < f; ++i)
        for (int j = i + 1; j < f; ++j) {
            double m = 0.5 * (inner[static_cast<size_t>(i) * f + j] + inner[static_cast<size_t>(j) * f + i]);
            inner[static_cast<size_t>(i) * f + j] = m;
            inner[static_cast<size_t>(j) * f + i] = m;
        }
    auto cross = detail::sqrt_psd(inner, f);
    double tr = 0.0;
    for (int i = 0; i < f; ++i)
        tr += ga.cov[static_cast<size_t>(i) * f + i] + gb.cov[static_cast<size_t>(i) * f + i] -
              2.0 * cross[static_cast<size_t>(i) * f + i];
    double dist = d2 + tr;
    return dist > 0.0 ? dist : 0.0;
}

// [OP] frechet_distance over probe features of two render sets.
inline double frechet_distance(const Probe& probe, const std::vector<Grid>& set_a,
                               const std::vector<Grid>& set_b) {
    std::vector<std::vector<double>> fa, fb;
    for (const auto& g : set_a) fa.push_back(probe.features(g));
    for (const auto& g : set_b) fb.push_back(probe.features(g));
    return frechet_features(fa, fb);
}

// [OP] structure_iou: IoU of thresholded foregrounds; both-empty is 1.
inline double structure_iou(const Grid& render, const Grid& structure_ref, double threshold) {
    require_same_shape(render, structure_ref, "structure_iou");
    long inter = 0, uni = 0;
    for (size_t i = 0; i < render.v.size(); ++i) {
        bool a = render.v[i] > threshold;
        bool b = structure_ref.v[i] > threshold;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace sdslab::eval
