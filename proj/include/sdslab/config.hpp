#pragma once

// Experiment configuration: JSON with defaults, schema validation that
// reports every offending key, flat dotted-key overrides, and a stable hash
// of the resolved document.

#include <sstream>
#include <string>
#include <vector>

#include "sdslab/anneal.hpp"
#include "sdslab/core.hpp"
#include "sdslab/diffusion.hpp"
#include "sdslab/distill.hpp"
#include "sdslab/eval.hpp"
#include "sdslab/guidance.hpp"
#include "sdslab/io.hpp"
#include "sdslab/personalize.hpp"
#include "sdslab/schedule.hpp"
#include "sdslab/scorenet.hpp"
#include "sdslab/synthdata.hpp"

namespace sdslab::config {

inline json default_config() {
    return json{
        {"master_seed", 1234},
        {"data",
         {{"subjects", 10}, {"poses", 16}, {"vary_hat", true}, {"vary_stripes", false},
          {"vary_item", false}, {"resolution", 32}}},
        {"schedule", {{"T", 1000}, {"beta_min", 1e-4}, {"beta_max", 0.02}}},
        {"net", {{"levels", 2}, {"base_channels", 8}, {"emb_dim", 16}, {"tokens", 8}}},
        {"train",
         {{"iterations", 2000}, {"batch_size", 16}, {"lr", 1e-3}, {"null_prob", 0.1},
          {"mismatch_prob", 0.5}, {"threads", 1}}},
        {"prior", {{"count", 64}}},
        {"finetune",
         {{"iterations", 2000}, {"batch_size", 16}, {"lr", 1e-4}, {"lambda", 1.0},
          {"target", "eps"}, {"weight", "fantasia"}}},
        {"edit",
         {{"iterations", 3000}, {"lr", 1e-2}, {"mu_mode", "one_minus_alpha_bar"},
          {"subject_id", 0}, {"attr", "hat"}, {"divergence_threshold", 1e4},
          {"probe_every", 100}, {"mask_dilation", 0}}},
        {"guidance",
         {{"w", 20.0}, {"v0", 0.3}, {"k", 750.0}, {"cond_scale_base", 0.5},
          {"cond_scale_personalized", 1.0}}},
        {"anneal",
         {{"t_max", 980.0}, {"t_min", 20.0}, {"window", 500.0}, {"cease_t1", 500.0},
          {"enabled", true}, {"static_k", 750.0}, {"hifa", false}, {"v_end", 0.0}}},
        {"probe", {{"feature_dim", 32}, {"iterations", 1500}, {"batch_size", 32}, {"lr", 5e-3}}},
        {"eval", {{"n_samples", 32}}},
        {"ablate", {{"seeds", 3}}},
    };
}

// Walks the user document against the defaults document: unknown keys and
// type mismatches are all collected before failing.
inline void validate_against(const json& defaults, const json& doc, const std::string& prefix,
                             std::vector<std::string>& errors) {
    for (auto& [key, value] : doc.items()) {
        std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!defaults.contains(key)) {
            errors.push_back("unknown key: " + path);
            continue;
        }
        const json& def = defaults.at(key);
        if (def.is_object()) {
            if (!value.is_object())
                errors.push_back("expected object at: " + path);
            else
                validate_against(def, value, path, errors);
        } else if (def.is_number() && !value.is_number()) {
            errors.push_back("expected number at: " + path);
        } else if (def.is_boolean() && !value.is_boolean()) {
            errors.push_back("expected boolean at: " + path);
        } else if (def.is_string() && !value.is_string()) {
            errors.push_back("expected string at: " + path);
        }
    }
}

struct ConfigError : std::runtime_error {
    std::vector<std::string> issues;
    explicit ConfigError(std::vector<std::string> errs)
        : std::runtime_error(join(errs)), issues(std::move(errs)) {}
    static std::string join(const std::vector<std::string>& errs) {
        std::ostringstream out;
        out << "config errors:";
        for (const auto& e : errs) out << "\n  " << e;
        return out.str();
    }
};

// Applies a "a.b.c=value" override; the value is parsed as JSON when
// possible, else taken as a string.
inline void apply_override(json& doc, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError({"override missing '=': " + spec});
    std::string path = spec.substr(0, eq), raw = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* cur = &doc;
    size_t pos = 0;
    while (true) {
        auto dot = path.find('.', pos);
        std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            break;
        }
        cur = &(*cur)[key];
        pos = dot + 1;
    }
}

// Merge user document over defaults (objects deep, scalars replace).
inline json merge(const json& defaults, const json& doc) {
    json out = defaults;
    for (auto& [key, value] : doc.items()) {
        if (out.contains(key) && out[key].is_object() && value.is_object())
            out[key] = merge(out[key], value);
        else
            out[key] = value;
    }
    return out;
}

inline json resolve(const json& user_doc, const std::vector<std::string>& overrides) {
    std::vector<std::string> errors;
    validate_against(default_config(), user_doc, "", errors);
    if (!errors.empty()) throw ConfigError(errors);
    json doc = merge(default_config(), user_doc);
    for (const auto& o : overrides) apply_override(doc, o);
    errors.clear();
    validate_against(default_config(), doc, "", errors);
    if (!errors.empty()) throw ConfigError(errors);
    return doc;
}

// Stable across runs and platforms: hash of the canonical serialized form.
inline uint64_t config_hash(const json& doc) { return fnv1a(doc.dump()); }

// ---- typed views ----------------------------------------------------------

inline uint64_t master_seed(const json& c) { return c.at("master_seed").get<uint64_t>(); }

inline synthdata::CorpusConfig corpus_config(const json& c, const std::string& seed_tag) {
    const json& d = c.at("data");
    synthdata::CorpusConfig cfg;
    cfg.subjects = d.at("subjects");
    cfg.poses = d.at("poses");
    cfg.vary_hat = d.at("vary_hat");
    cfg.vary_stripes = d.at("vary_stripes");
    cfg.vary_item = d.at("vary_item");
    cfg.resolution = d.at("resolution");
    cfg.seed = derive_seed(master_seed(c), seed_tag);
    return cfg;
}

inline diffusion::NoiseSchedule schedule(const json& c) {
    const json& s = c.at("schedule");
    return diffusion::make_schedule(s.at("T"), s.at("beta_min"), s.at("beta_max"));
}

inline scorenet::NetConfig net_config(const json& c) {
    const json& n = c.at("net");
    scorenet::NetConfig cfg;
    cfg.levels = n.at("levels");
    cfg.base_channels = n.at("base_channels");
    cfg.emb_dim = n.at("emb_dim");
    cfg.tokens = n.at("tokens");
    cfg.timesteps = c.at("schedule").at("T");
    // Each net trains and runs at its own conditioning scale: the base net at
    // cond_scale_base, the personalized copy (re-tagged during fine-tuning)
    // at cond_scale_personalized.
    cfg.cond_scale = c.at("guidance").at("cond_scale_base");
    return cfg;
}

inline diffusion::TrainConfig train_config(const json& c) {
    const json& t = c.at("train");
    diffusion::TrainConfig cfg;
    cfg.iterations = t.at("iterations");
    cfg.batch_size = t.at("batch_size");
    cfg.lr = t.at("lr");
    cfg.null_prob = t.at("null_prob");
    cfg.mismatch_prob = t.at("mismatch_prob");
    cfg.threads = t.at("threads");
    cfg.seed = derive_seed(master_seed(c), "train-base");
    return cfg;
}

inline personalize::FinetuneConfig finetune_config(const json& c) {
    const json& f = c.at("finetune");
    personalize::FinetuneConfig cfg;
    cfg.iterations = f.at("iterations");
    cfg.batch_size = f.at("batch_size");
    cfg.lr = f.at("lr");
    cfg.lambda = f.at("lambda");
    cfg.cond_scale = c.at("guidance").at("cond_scale_personalized");
    cfg.target = f.at("target") == "clean" ? diffusion::TargetMode::clean
                                           : diffusion::TargetMode::eps;
    cfg.weight = f.at("weight") == "uniform" ? diffusion::WeightMode::uniform
                                             : diffusion::WeightMode::fantasia;
    cfg.seed = derive_seed(master_seed(c), "finetune");
    return cfg;
}

inline guidance::GuidanceConfig guidance_config(const json& c) {
    const json& g = c.at("guidance");
    guidance::GuidanceConfig cfg;
    cfg.w = g.at("w");
    cfg.v0 = g.at("v0");
    cfg.k = g.at("k");
    cfg.cond_scale_base = g.at("cond_scale_base");
    cfg.cond_scale_personalized = g.at("cond_scale_personalized");
    return cfg;
}

inline anneal::AnnealConfig anneal_config(const json& c) {
    const json& a = c.at("anneal");
    anneal::AnnealConfig cfg;
    cfg.t_max = a.at("t_max");
    cfg.t_min = a.at("t_min");
    cfg.window = a.at("window");
    cfg.cease_t1 = a.at("cease_t1");
    cfg.enabled = a.at("enabled");
    cfg.static_k = a.at("static_k");
    cfg.hifa_mode = a.at("hifa");
    cfg.v0 = c.at("guidance").at("v0");
    cfg.v_end = a.at("v_end");
    cfg.N = c.at("edit").at("iterations");
    return cfg;
}

inline int attr_index(const std::string& name) {
    if (name == "hat") return 0;
    if (name == "stripes") return 1;
    if (name == "held_item") return 2;
    throw ConfigError({"edit.attr must be one of hat|stripes|held_item, got: " + name});
}

inline int attr_token(int attr_index) {
    switch (attr_index) {
        case 0: return scorenet::kTokenHat;
        case 1: return scorenet::kTokenStripes;
        default: return scorenet::kTokenItem;
    }
}

inline distill::EditConfig edit_config(const json& c) {
    const json& e = c.at("edit");
    distill::EditConfig cfg;
    int attr = attr_index(e.at("attr"));
    cfg.prompt_edit = {scorenet::kTokenClass, attr_token(attr)};
    cfg.prompt_id = {scorenet::kTokenClass, scorenet::kTokenSks};
    cfg.iterations = e.at("iterations");
    cfg.lr = e.at("lr");
    std::string mu = e.at("mu_mode");
    cfg.mu_mode = mu == "constant"  ? distill::MuMode::constant
                  : mu == "fantasia" ? distill::MuMode::fantasia
                                     : distill::MuMode::one_minus_alpha_bar;
    cfg.guidance = guidance_config(c);
    cfg.anneal = anneal_config(c);
    cfg.seed = derive_seed(master_seed(c), "edit");
    cfg.divergence_threshold = e.at("divergence_threshold");
    cfg.probe_every = e.at("probe_every");
    cfg.mask_dilation = e.at("mask_dilation");
    return cfg;
}

inline eval::ProbeConfig probe_config(const json& c) {
    const json& p = c.at("probe");
    eval::ProbeConfig cfg;
    cfg.feature_dim = p.at("feature_dim");
    cfg.iterations = p.at("iterations");
    cfg.batch_size = p.at("batch_size");
    cfg.lr = p.at("lr");
    cfg.seed = derive_seed(master_seed(c), "probe");
    return cfg;
}

}  // namespace sdslab::config
