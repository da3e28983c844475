#pragma once

// Conditional epsilon-prediction network: a small convolutional
// encoder-decoder with per-level timestep/token conditioning, a learned
// token-embedding table, and a structure-map input channel scaled by
// cond_scale. Forward evaluation and exact reverse-mode parameter gradients
// are hand-written; everything runs in double precision and serializes as
// float32 through the shared tensor container.
//
// Architecture (levels = L, base width C, image H x W with H, W divisible
// by 2^L):
//   input   : 2 channels, [z_t ; cond_scale * structure]
//   conv_in : 3x3 s1, 2 -> C, +emb, SiLU
//   down_l  : 3x3 s2, C*2^(l-1) -> C*2^l, +emb, SiLU      (l = 1..L)
//   mid     : 3x3 s1, deepest -> deepest, SiLU
//   up_l    : nearest x2, concat skip, 3x3 s1 -> C*2^(l-1), +emb, SiLU
//   out     : 3x3 s1, C -> 1, zero-initialized
// Conditioning vector g = sinusoidal(t) + sum of token embeddings; each
// +emb layer adds W_emb * g as a per-channel bias.

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdslab/core.hpp"
#include "sdslab/io.hpp"

namespace sdslab::scorenet {

// Token vocabulary. The table may hold more rows (fresh/spare tokens).
enum Token : int {
    kTokenNull = 0,
    kTokenClass = 1,
    kTokenSks = 2,
    kTokenHat = 3,
    kTokenStripes = 4,
    kTokenItem = 5,
    kTokenFresh = 6,
};
constexpr int kMinTokens = 7;

struct Condition {
    std::vector<int> tokens;              // empty = null prompt
    const Grid* structure = nullptr;      // optional, image resolution
};

struct NetConfig {
    int levels = 2;
    int base_channels = 8;
    int emb_dim = 16;
    int tokens = 8;
    int timesteps = 1000;
    double cond_scale = 0.5;
};

namespace detail {

struct ConvSpec {
    std::string name;
    int cin = 0, cout = 0, stride = 1;
    bool has_emb = false;
};

inline std::vector<ConvSpec> conv_specs(const NetConfig& cfg) {
    std::vector<ConvSpec> specs;
    int C = cfg.base_channels;
    specs.push_back({"conv_in", 2, C, 1, true});
    for (int l = 1; l <= cfg.levels; ++l)
        specs.push_back({"down" + std::to_string(l), C << (l - 1), C << l, 2, true});
    int deep = C << cfg.levels;
    specs.push_back({"mid", deep, deep, 1, false});
    for (int l = cfg.levels; l >= 1; --l)
        specs.push_back({"up" + std::to_string(l), (C << l) + (C << (l - 1)), C << (l - 1), 1, true});
    specs.push_back({"conv_out", C, 1, 1, false});
    return specs;
}

}  // namespace detail

class ScoreNet {
  public:
    NetConfig cfg;
    std::vector<double> params;

    ScoreNet() = default;

    explicit ScoreNet(const NetConfig& config) : cfg(config) {
        if (cfg.tokens < kMinTokens)
            throw std::invalid_argument("ScoreNet: token table needs >= 7 entries");
        build_layout();
        params.assign(total_params_, 0.0);
    }

    static ScoreNet init(const NetConfig& config, uint64_t seed) {
        ScoreNet net(config);
        SplitMix64 rng(seed);
        for (const auto& e : net.entries_) {
            double* p = net.params.data() + e.offset;
            if (e.kind == EntryKind::conv_w) {
                double std = std::sqrt(2.0 / (e.aux * 9.0));  // aux = cin
                for (size_t i = 0; i < e.size; ++i) p[i] = rng.gaussian() * std;
            } else if (e.kind == EntryKind::conv_b) {
                // zero
            } else if (e.kind == EntryKind::emb_w) {
                double std = 0.2 / std::sqrt(static_cast<double>(net.cfg.emb_dim));
                for (size_t i = 0; i < e.size; ++i) p[i] = rng.gaussian() * std;
            } else {  // token table
                for (size_t i = 0; i < e.size; ++i) p[i] = rng.gaussian() * 0.5;
            }
        }
        // conv_out stays zero-initialized: a fresh net predicts eps = 0.
        auto& out_w = net.entry("conv_out/w");
        for (size_t i = 0; i < out_w.size; ++i) net.params[out_w.offset + i] = 0.0;
        return net;
    }

    size_t param_count() const { return total_params_; }

    // ---- parameter layout -------------------------------------------------
    enum class EntryKind { conv_w, conv_b, emb_w, token_table };

    struct Entry {
        std::string name;
        EntryKind kind;
        size_t offset = 0, size = 0;
        int aux = 0;  // cin for conv_w, rows for token_table
        std::vector<int> shape;
    };

    const std::vector<Entry>& entries() const { return entries_; }

    const Entry& entry(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e;
        throw std::invalid_argument("ScoreNet: no parameter entry " + name);
    }

    double* token_row(int id) {
        check_token(id);
        return params.data() + token_offset_ + static_cast<size_t>(id) * cfg.emb_dim;
    }
    const double* token_row(int id) const {
        check_token(id);
        return params.data() + token_offset_ + static_cast<size_t>(id) * cfg.emb_dim;
    }

    // ---- forward ----------------------------------------------------------
    struct ForwardCache {
        std::vector<Tensor> conv_in;    // input tensor per conv layer
        std::vector<Tensor> pre;        // pre-activation per conv layer
        std::vector<double> g;          // conditioning vector
        std::vector<int> token_bag;     // resolved token ids (null substituted)
        int t = 0;
    };

    Grid forward(const Grid& z_t, int t, const Condition& cond, ForwardCache* cache = nullptr,
                 double cond_scale_override = -1.0) const {
        if (t < 1 || t > cfg.timesteps) throw std::out_of_range("ScoreNet::forward: t out of range");
        const int H = z_t.h, W = z_t.w;
        const int div = 1 << cfg.levels;
        if (H % div != 0 || W % div != 0)
            throw std::invalid_argument("ScoreNet::forward: resolution not divisible by 2^levels");
        if (cond.structure) require_same_shape(z_t, *cond.structure, "ScoreNet::forward structure");

        double scale = cond_scale_override >= 0.0 ? cond_scale_override : cfg.cond_scale;
        Tensor x(2, H, W);
        for (int i = 0; i < H * W; ++i) {
            x.v[i] = z_t.v[i];
            x.v[static_cast<size_t>(H) * W + i] = cond.structure ? scale * cond.structure->v[i] : 0.0;
        }

        std::vector<int> bag = cond.tokens;
        if (bag.empty()) bag.push_back(kTokenNull);
        for (int id : bag) check_token(id);

        std::vector<double> g = timestep_embedding(t);
        for (int id : bag) {
            const double* row = token_row(id);
            for (int e = 0; e < cfg.emb_dim; ++e) g[e] += row[e];
        }

        ForwardCache local;
        ForwardCache& fc = cache ? *cache : local;
        fc.conv_in.clear();
        fc.pre.clear();
        fc.g = g;
        fc.token_bag = bag;
        fc.t = t;

        // Encoder
        std::vector<Tensor> enc_acts;  // activations at levels 0..L
        Tensor cur = std::move(x);
        int li = 0;
        for (int l = 0; l <= cfg.levels; ++l, ++li) {
            Tensor pre = conv_apply(li, cur, g);
            Tensor act = silu(pre);
            fc.conv_in.push_back(std::move(cur));
            fc.pre.push_back(std::move(pre));
            enc_acts.push_back(act);
            cur = std::move(act);
        }
        // Mid
        {
            Tensor pre = conv_apply(li, cur, g);
            Tensor act = silu(pre);
            fc.conv_in.push_back(std::move(cur));
            fc.pre.push_back(std::move(pre));
            cur = std::move(act);
            ++li;
        }
        // Decoder
        for (int l = cfg.levels; l >= 1; --l, ++li) {
            const Tensor& skip = enc_acts[static_cast<size_t>(l) - 1];
            Tensor up = upsample2(cur, skip.h, skip.w);
            Tensor cat = concat(up, skip);
            Tensor pre = conv_apply(li, cat, g);
            Tensor act = silu(pre);
            fc.conv_in.push_back(std::move(cat));
            fc.pre.push_back(std::move(pre));
            cur = std::move(act);
        }
        // Output head (no activation, no emb)
        Tensor pre = conv_apply(li, cur, g);
        fc.conv_in.push_back(std::move(cur));
        fc.pre.push_back(pre);

        Grid out(H, W);
        for (int i = 0; i < H * W; ++i) out.v[i] = pre.v[i];
        return out;
    }

    // Accumulates d(loss)/d(params) into `grad` (size param_count()) given
    // d(loss)/d(eps_hat). Input-image gradients are computed internally for
    // chaining between layers but not returned; SDS never needs them.
    void backward(const ForwardCache& fc, const Grid& d_eps, std::vector<double>& grad) const {
        if (grad.size() != total_params_) throw std::invalid_argument("backward: grad size");
        const auto& specs = specs_;
        const int n_layers = static_cast<int>(specs.size());

        std::vector<double> d_g(cfg.emb_dim, 0.0);

        // Upstream gradient entering the layer-output side, walked backwards.
        Tensor d_cur(1, d_eps.h, d_eps.w);
        for (size_t i = 0; i < d_eps.v.size(); ++i) d_cur.v[i] = d_eps.v[i];

        // conv_out (no activation)
        int li = n_layers - 1;
        Tensor d_in = conv_backward(li, fc, d_cur, grad, d_g);
        d_cur = std::move(d_in);

        // Decoder ups; their concat inputs split into (upsampled deeper, skip).
        // Skip gradients re-enter the encoder chain below, so stash them.
        std::vector<Tensor> d_skip(static_cast<size_t>(cfg.levels));
        for (int l = 1; l <= cfg.levels; ++l) {
            --li;
            Tensor d_pre = silu_backward(fc.pre[static_cast<size_t>(li)], d_cur);
            Tensor d_cat = conv_backward_pre(li, fc, d_pre, grad, d_g);
            const Tensor& cat = fc.conv_in[static_cast<size_t>(li)];
            int up_c = cat.c - (cfg.base_channels << (l - 1));
            Tensor d_up(up_c, cat.h, cat.w);
            Tensor d_sk(cat.c - up_c, cat.h, cat.w);
            split(d_cat, d_up, d_sk);
            d_skip[static_cast<size_t>(l) - 1] = std::move(d_sk);
            // deeper activation had size of fc.pre at the layer below
            const Tensor& deeper_pre = fc.pre[static_cast<size_t>(li) - 1];
            d_cur = upsample2_backward(d_up, deeper_pre.h, deeper_pre.w);
        }

        // Mid
        --li;
        {
            Tensor d_pre = silu_backward(fc.pre[static_cast<size_t>(li)], d_cur);
            d_cur = conv_backward_pre(li, fc, d_pre, grad, d_g);
        }

        // Encoder, deepest first. Encoder activation j (j < levels) also fed
        // the decoder as a skip, so fold that gradient in before layer j.
        for (int j = cfg.levels; j >= 0; --j) {
            --li;
            if (j < cfg.levels) {
                Tensor& extra = d_skip[static_cast<size_t>(j)];
                for (size_t i = 0; i < d_cur.v.size(); ++i) d_cur.v[i] += extra.v[i];
            }
            Tensor d_pre = silu_backward(fc.pre[static_cast<size_t>(li)], d_cur);
            d_cur = conv_backward_pre(li, fc, d_pre, grad, d_g);
        }

        // Conditioning vector -> token table rows (sinusoidal part has no params).
        for (int id : fc.token_bag) {
            double* row = grad.data() + token_offset_ + static_cast<size_t>(id) * cfg.emb_dim;
            for (int e = 0; e < cfg.emb_dim; ++e) row[e] += d_g[e];
        }
    }

    // ---- checkpoint I/O ---------------------------------------------------
    void save(const fs::path& dir, const json& extra_meta = json::object()) const {
        TensorContainer c;
        for (const auto& e : entries_)
            c.put(e.name, e.shape,
                  std::vector<double>(params.begin() + static_cast<long>(e.offset),
                                      params.begin() + static_cast<long>(e.offset + e.size)));
        json meta = extra_meta;
        meta["kind"] = "scorenet";
        meta["levels"] = cfg.levels;
        meta["base_channels"] = cfg.base_channels;
        meta["emb_dim"] = cfg.emb_dim;
        meta["tokens"] = cfg.tokens;
        meta["timesteps"] = cfg.timesteps;
        meta["cond_scale"] = cfg.cond_scale;
        c.meta() = meta;
        c.save(dir);
        // model_manifest.json names each parameter tensor for external readers.
        json mm;
        json names = json::array();
        for (const auto& e : entries_) names.push_back({{"name", e.name}, {"shape", e.shape}});
        mm["parameters"] = names;
        mm["meta"] = meta;
        write_json(dir / "model_manifest.json", mm);
    }

    static ScoreNet load(const fs::path& dir) {
        TensorContainer c = TensorContainer::load(dir);
        const json& meta = c.meta();
        NetConfig cfg;
        cfg.levels = meta.at("levels");
        cfg.base_channels = meta.at("base_channels");
        cfg.emb_dim = meta.at("emb_dim");
        cfg.tokens = meta.at("tokens");
        cfg.timesteps = meta.at("timesteps");
        cfg.cond_scale = meta.at("cond_scale");
        ScoreNet net(cfg);
        for (const auto& e : net.entries_) {
            const auto& data = c.data(e.name);
            if (data.size() != e.size) throw IoError("checkpoint tensor size mismatch: " + e.name);
            std::copy(data.begin(), data.end(), net.params.begin() + static_cast<long>(e.offset));
        }
        return net;
    }

    std::vector<double> timestep_embedding(int t) const {
        std::vector<double> g(cfg.emb_dim, 0.0);
        int half = cfg.emb_dim / 2;
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
            g[i] = std::sin(t * freq);
            g[half + i] = std::cos(t * freq);
        }
        return g;
    }

  private:
    std::vector<detail::ConvSpec> specs_;
    std::vector<Entry> entries_;
    std::map<std::string, size_t> entry_index_;
    size_t token_offset_ = 0;
    size_t total_params_ = 0;

    void check_token(int id) const {
        if (id < 0 || id >= cfg.tokens)
            throw std::invalid_argument("ScoreNet: unknown token id " + std::to_string(id));
    }

    void build_layout() {
        specs_ = detail::conv_specs(cfg);
        size_t off = 0;
        auto add = [&](const std::string& name, EntryKind kind, std::vector<int> shape, int aux) {
            size_t n = 1;
            for (int d : shape) n *= static_cast<size_t>(d);
            entries_.push_back({name, kind, off, n, aux, std::move(shape)});
            entry_index_[name] = entries_.size() - 1;
            off += n;
        };
        for (const auto& s : specs_) {
            add(s.name + "/w", EntryKind::conv_w, {s.cout, s.cin, 3, 3}, s.cin);
            add(s.name + "/b", EntryKind::conv_b, {s.cout}, 0);
            if (s.has_emb) add(s.name + "/emb", EntryKind::emb_w, {s.cout, cfg.emb_dim}, 0);
        }
        token_offset_ = off;
        add("token_table", EntryKind::token_table, {cfg.tokens, cfg.emb_dim}, cfg.tokens);
        total_params_ = off + static_cast<size_t>(cfg.tokens) * cfg.emb_dim;
    }

    const double* param_ptr(const std::string& name) const {
        return params.data() + entries_[entry_index_.at(name)].offset;
    }

    // conv 3x3, pad 1, given stride; adds bias and (optionally) the embedding
    // projection as per-channel bias.
    Tensor conv_apply(int li, const Tensor& in, const std::vector<double>& g) const {
        const auto& s = specs_[static_cast<size_t>(li)];
        const double* W = param_ptr(s.name + "/w");
        const double* B = param_ptr(s.name + "/b");
        const int Ho = (in.h - 1) / s.stride + 1, Wo = (in.w - 1) / s.stride + 1;
        Tensor out(s.cout, Ho, Wo);
        for (int co = 0; co < s.cout; ++co) {
            double bias = B[co];
            if (s.has_emb) {
                const double* E = param_ptr(s.name + "/emb") +
                                  static_cast<size_t>(co) * cfg.emb_dim;
                for (int e = 0; e < cfg.emb_dim; ++e) bias += E[e] * g[e];
            }
            for (int oy = 0; oy < Ho; ++oy) {
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = bias;
                    int iy0 = oy * s.stride - 1, ix0 = ox * s.stride - 1;
                    for (int ci = 0; ci < s.cin; ++ci) {
                        const double* wk =
                            W + ((static_cast<size_t>(co) * s.cin + ci) * 9);
                        for (int ky = 0; ky < 3; ++ky) {
                            int iy = iy0 + ky;
                            if (iy < 0 || iy >= in.h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                int ix = ix0 + kx;
                                if (ix < 0 || ix >= in.w) continue;
                                acc += wk[ky * 3 + kx] * in.at(ci, iy, ix);
                            }
                        }
                    }
                    out.at(co, oy, ox) = acc;
                }
            }
        }
        return out;
    }

    // Backward through conv given d(pre); accumulates dW/dB/dEmb and returns
    // d(input).
    Tensor conv_backward_pre(int li, const ForwardCache& fc, const Tensor& d_pre,
                             std::vector<double>& grad, std::vector<double>& d_g) const {
        const auto& s = specs_[static_cast<size_t>(li)];
        const Tensor& in = fc.conv_in[static_cast<size_t>(li)];
        const double* W = param_ptr(s.name + "/w");
        const Entry& ew = entries_[entry_index_.at(s.name + "/w")];
        const Entry& eb = entries_[entry_index_.at(s.name + "/b")];
        double* dW = grad.data() + ew.offset;
        double* dB = grad.data() + eb.offset;

        Tensor d_in(in.c, in.h, in.w);
        for (int co = 0; co < s.cout; ++co) {
            double d_bias = 0.0;
            for (int oy = 0; oy < d_pre.h; ++oy) {
                for (int ox = 0; ox < d_pre.w; ++ox) {
                    double go = d_pre.at(co, oy, ox);
                    if (go == 0.0) continue;
                    d_bias += go;
                    int iy0 = oy * s.stride - 1, ix0 = ox * s.stride - 1;
                    for (int ci = 0; ci < s.cin; ++ci) {
                        double* dwk = dW + ((static_cast<size_t>(co) * s.cin + ci) * 9);
                        const double* wk = W + ((static_cast<size_t>(co) * s.cin + ci) * 9);
                        for (int ky = 0; ky < 3; ++ky) {
                            int iy = iy0 + ky;
                            if (iy < 0 || iy >= in.h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                int ix = ix0 + kx;
                                if (ix < 0 || ix >= in.w) continue;
                                dwk[ky * 3 + kx] += go * in.at(ci, iy, ix);
                                d_in.at(ci, iy, ix) += go * wk[ky * 3 + kx];
                            }
                        }
                    }
                }
            }
            dB[co] += d_bias;
            if (s.has_emb) {
                const Entry& ee = entries_[entry_index_.at(s.name + "/emb")];
                double* dE = grad.data() + ee.offset + static_cast<size_t>(co) * cfg.emb_dim;
                const double* E = param_ptr(s.name + "/emb") + static_cast<size_t>(co) * cfg.emb_dim;
                for (int e = 0; e < cfg.emb_dim; ++e) {
                    dE[e] += d_bias * fc.g[e];
                    d_g[e] += d_bias * E[e];
                }
            }
        }
        return d_in;
    }

    // For the output head there is no activation: d_pre == d_out.
    Tensor conv_backward(int li, const ForwardCache& fc, const Tensor& d_out,
                         std::vector<double>& grad, std::vector<double>& d_g) const {
        return conv_backward_pre(li, fc, d_out, grad, d_g);
    }

    static Tensor silu(const Tensor& pre) {
        Tensor out(pre.c, pre.h, pre.w);
        for (size_t i = 0; i < pre.v.size(); ++i) {
            double x = pre.v[i];
            out.v[i] = x / (1.0 + std::exp(-x));
        }
        return out;
    }

    static Tensor silu_backward(const Tensor& pre, const Tensor& d_act) {
        Tensor d_pre(pre.c, pre.h, pre.w);
        for (size_t i = 0; i < pre.v.size(); ++i) {
            double x = pre.v[i];
            double s = 1.0 / (1.0 + std::exp(-x));
            d_pre.v[i] = d_act.v[i] * s * (1.0 + x * (1.0 - s));
        }
        return d_pre;
    }

    static Tensor upsample2(const Tensor& in, int out_h, int out_w) {
        Tensor out(in.c, out_h, out_w);
        for (int c = 0; c < in.c; ++c)
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x)
                    out.at(c, y, x) = in.at(c, y / 2 < in.h ? y / 2 : in.h - 1,
                                            x / 2 < in.w ? x / 2 : in.w - 1);
        return out;
    }

    static Tensor upsample2_backward(const Tensor& d_out, int in_h, int in_w) {
        Tensor d_in(d_out.c, in_h, in_w);
        for (int c = 0; c < d_out.c; ++c)
            for (int y = 0; y < d_out.h; ++y)
                for (int x = 0; x < d_out.w; ++x)
                    d_in.at(c, y / 2 < in_h ? y / 2 : in_h - 1, x / 2 < in_w ? x / 2 : in_w - 1) +=
                        d_out.at(c, y, x);
        return d_in;
    }

    static Tensor concat(const Tensor& a, const Tensor& b) {
        Tensor out(a.c + b.c, a.h, a.w);
        std::copy(a.v.begin(), a.v.end(), out.v.begin());
        std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<long>(a.v.size()));
        return out;
    }

    static void split(const Tensor& cat, Tensor& a, Tensor& b) {
        std::copy(cat.v.begin(), cat.v.begin() + static_cast<long>(a.v.size()), a.v.begin());
        std::copy(cat.v.begin() + static_cast<long>(a.v.size()), cat.v.end(), b.v.begin());
    }
};

// ---------------------------------------------------------------------------
// Training objectives and gradient utilities
// ---------------------------------------------------------------------------
struct BatchItem {
    Grid z_t;
    int t = 1;
    Condition cond;
    Grid target;        // eps or clean image depending on the objective mode
    double weight = 1.0;
};

// Mean over the batch of weight * mean-squared pixel error.
inline double batch_loss(const ScoreNet& net, const std::vector<BatchItem>& batch) {
    double total = 0.0;
    for (const auto& item : batch) {
        Grid eps_hat = net.forward(item.z_t, item.t, item.cond);
        double se = 0.0;
        for (size_t i = 0; i < eps_hat.v.size(); ++i) {
            double d = eps_hat.v[i] - item.target.v[i];
            se += d * d;
        }
        total += item.weight * se / static_cast<double>(eps_hat.v.size());
    }
    return total / static_cast<double>(batch.size());
}

// [OP] param_gradients: exact reverse-mode gradient of batch_loss.
inline std::vector<double> param_gradients(const ScoreNet& net, const std::vector<BatchItem>& batch,
                                           double* loss_out = nullptr) {
    std::vector<double> grad(net.param_count(), 0.0);
    double total = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& item : batch) {
        ScoreNet::ForwardCache fc;
        Grid eps_hat = net.forward(item.z_t, item.t, item.cond, &fc);
        const double inv_p = 1.0 / static_cast<double>(eps_hat.v.size());
        Grid d_eps(eps_hat.h, eps_hat.w);
        double se = 0.0;
        for (size_t i = 0; i < eps_hat.v.size(); ++i) {
            double d = eps_hat.v[i] - item.target.v[i];
            se += d * d;
            d_eps.v[i] = 2.0 * d * item.weight * inv_p * inv_b;
        }
        total += item.weight * se * inv_p;
        net.backward(fc, d_eps, grad);
    }
    double loss = total * inv_b;
    if (!std::isfinite(loss)) throw std::runtime_error("param_gradients: non-finite loss");
    if (loss_out) *loss_out = loss;
    return grad;
}

// [OP] grad_check: central finite differences against analytic gradients,
// reported per parameter entry.
struct GradCheckReport {
    struct Layer {
        std::string name;
        double max_rel_err = 0.0;
        bool pass = true;
    };
    std::vector<Layer> layers;
    double max_rel_err = 0.0;
    bool pass = true;
};

inline GradCheckReport grad_check(ScoreNet net, const std::vector<BatchItem>& batch,
                                  double tolerance = 1e-4, double h = 1e-5) {
    GradCheckReport report;
    std::vector<double> analytic = param_gradients(net, batch);
    double grad_scale = 0.0;
    for (double g : analytic) grad_scale = std::max(grad_scale, std::abs(g));
    for (const auto& e : net.entries()) {
        GradCheckReport::Layer layer;
        layer.name = e.name;
        for (size_t i = e.offset; i < e.offset + e.size; ++i) {
            double saved = net.params[i];
            net.params[i] = saved + h;
            double lp = batch_loss(net, batch);
            net.params[i] = saved - h;
            double lm = batch_loss(net, batch);
            net.params[i] = saved;
            double numeric = (lp - lm) / (2.0 * h);
            double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-3 * grad_scale, 1e-12});
            double rel = std::abs(numeric - analytic[i]) / denom;
            layer.max_rel_err = std::max(layer.max_rel_err, rel);
        }
        layer.pass = layer.max_rel_err < tolerance;
        report.layers.push_back(layer);
        report.max_rel_err = std::max(report.max_rel_err, layer.max_rel_err);
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

}  // namespace sdslab::scorenet
