// Experiment driver: data generation, base training, personalization,
// editing, evaluation, the ablation ladder, annealing dumps, and CSV plots.
//
// Exit codes: 0 success, 2 config error, 3 divergence, 4 missing artifact.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdslab/ablation.hpp"
#include "sdslab/anneal.hpp"
#include "sdslab/canvas.hpp"
#include "sdslab/config.hpp"
#include "sdslab/diffusion.hpp"
#include "sdslab/distill.hpp"
#include "sdslab/eval.hpp"
#include "sdslab/guidance.hpp"
#include "sdslab/io.hpp"
#include "sdslab/personalize.hpp"
#include "sdslab/schedule.hpp"
#include "sdslab/scorenet.hpp"
#include "sdslab/synthdata.hpp"

namespace {

using namespace sdslab;
using sdslab::json;

constexpr const char* kVersion = "sdslab-0.1.0";

struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool checkpoint_marked_trained(const fs::path& dir) {
    json mm = load_json(dir / "manifest.json");
    return mm.at("meta").value("trained", false);
}

fs::path require_artifact(const fs::path& path, const std::string& producer) {
    if (!fs::exists(path))
        throw MissingArtifactError("missing artifact " + path.string() + "; run `sdslab " +
                                   producer + "` first");
    return path;
}

// Every run records its resolved config, seeds, version, and output hashes.
void write_run_record(const fs::path& out_dir, const std::string& command, const json& cfg,
                      const std::vector<fs::path>& outputs) {
    json run;
    run["command"] = command;
    run["version"] = kVersion;
    run["config"] = cfg;
    run["config_hash"] = config::config_hash(cfg);
    run["master_seed"] = config::master_seed(cfg);
    json hashes = json::object();
    for (const auto& p : outputs) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::recursive_directory_iterator(p))
                if (e.is_regular_file()) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            uint64_t h = 0xCBF29CE484222325ull;
            for (const auto& f : files) {
                uint64_t fh = hash_file(f);
                h = fnv1a(&fh, sizeof(fh), fnv1a(fs::relative(f, p).string(), h));
            }
            hashes[fs::relative(p, out_dir).string()] = h;
        } else if (fs::exists(p)) {
            hashes[fs::relative(p, out_dir).string()] = hash_file(p);
        }
    }
    run["artifact_hashes"] = hashes;
    write_json(out_dir / ("run_" + command + ".json"), run);
}

synthdata::Corpus load_corpus_artifact(const fs::path& out_dir, const std::string& which) {
    return synthdata::load_corpus(require_artifact(out_dir / "data" / which, "gen-data"));
}

// ---- subcommand bodies ----------------------------------------------------

int cmd_gen_data(const json& cfg, const fs::path& out) {
    auto train_cfg = config::corpus_config(cfg, "data/train");
    // The probe corpus must contain the same subjects (the probe's identity
    // head classifies them); it gets a denser pose sweep instead of new data.
    auto probe_cfg = train_cfg;
    probe_cfg.poses = train_cfg.poses * 2;
    auto train_corpus = synthdata::build_corpus(train_cfg);
    auto probe_corpus = synthdata::build_corpus(probe_cfg);
    synthdata::save_corpus(train_corpus, out / "data" / "corpus");
    synthdata::save_corpus(probe_corpus, out / "data" / "probe_corpus");
    write_run_record(out, "gen-data", cfg, {out / "data" / "corpus", out / "data" / "probe_corpus"});
    std::printf("gen-data: %zu train samples, %zu probe samples\n", train_corpus.samples.size(),
                probe_corpus.samples.size());
    return 0;
}

int cmd_train_base(const json& cfg, const fs::path& out) {
    auto corpus = load_corpus_artifact(out, "corpus");
    auto sched = config::schedule(cfg);
    auto net = scorenet::ScoreNet::init(config::net_config(cfg),
                                        derive_seed(config::master_seed(cfg), "net-init"));
    auto result = diffusion::train_denoiser(net, corpus, sched, config::train_config(cfg));
    result.net.save(out / "models" / "base", {{"trained", true}});
    fs::create_directories(out / "traces");
    result.trace.save(out / "traces" / "base_loss.csv");
    write_run_record(out, "train-base", cfg,
                     {out / "models" / "base", out / "traces" / "base_loss.csv"});
    std::printf("train-base: %d iterations done\n", cfg.at("train").at("iterations").get<int>());
    return 0;
}

int cmd_finetune(const json& cfg, const fs::path& out) {
    auto corpus = load_corpus_artifact(out, "corpus");
    auto sched = config::schedule(cfg);
    auto base = scorenet::ScoreNet::load(require_artifact(out / "models" / "base", "train-base"));

    int subject_id = cfg.at("edit").at("subject_id");
    auto subject_corpus = ablation::subject_slice(corpus, subject_id);
    if (subject_corpus.samples.empty())
        throw MissingArtifactError("no un-edited samples for subject " +
                                   std::to_string(subject_id) + "; re-run `sdslab gen-data`");

    auto prior = personalize::make_prior_corpus(
        base, {scorenet::kTokenClass}, cfg.at("prior").at("count"),
        derive_seed(config::master_seed(cfg), "prior"), corpus, sched,
        checkpoint_marked_trained(out / "models" / "base"));
    personalize::save_prior_corpus(prior, out / "artifacts" / "prior");

    auto result = personalize::finetune(base, subject_corpus, prior, sched,
                                        config::finetune_config(cfg));
    result.net.save(out / "models" / "personalized",
                    {{"personalized", true}, {"identity_token", scorenet::kTokenSks}});
    fs::create_directories(out / "traces");
    result.trace.save(out / "traces" / "finetune_loss.csv");
    write_run_record(out, "finetune", cfg,
                     {out / "models" / "personalized", out / "artifacts" / "prior",
                      out / "traces" / "finetune_loss.csv"});
    std::printf("finetune: personalized net written\n");
    return 0;
}

eval::Probe ensure_probe(const json& cfg, const fs::path& out) {
    fs::path probe_dir = out / "models" / "probe";
    if (fs::exists(probe_dir / "manifest.json")) return eval::Probe::load(probe_dir);
    auto probe_corpus = load_corpus_artifact(out, "probe_corpus");
    auto probe = eval::train_probe(probe_corpus, config::probe_config(cfg));
    probe.save(probe_dir);
    return probe;
}

int cmd_edit(const json& cfg, const fs::path& out) {
    auto corpus = load_corpus_artifact(out, "corpus");
    auto sched = config::schedule(cfg);
    auto base = scorenet::ScoreNet::load(require_artifact(out / "models" / "base", "train-base"));
    auto pers =
        scorenet::ScoreNet::load(require_artifact(out / "models" / "personalized", "finetune"));

    int subject_id = cfg.at("edit").at("subject_id");
    int attr = config::attr_index(cfg.at("edit").at("attr"));
    auto subject_corpus = ablation::subject_slice(corpus, subject_id);
    auto probe = ensure_probe(cfg, out);

    canvas::Canvas cv(subject_corpus.samples.at(0).subject, subject_corpus.resolution());
    distill::EditHooks hooks{&probe, attr, subject_id};
    auto result = distill::edit(cv, base, pers, subject_corpus, sched, config::edit_config(cfg),
                                hooks);

    fs::create_directories(out / "traces");
    result.trace.save(out / "traces" / "edit_trace.csv");
    TensorContainer tex;
    tex.put("texture", {cv.texture.h, cv.texture.w}, cv.texture.v);
    tex.meta() = {{"kind", "canvas_texture"}, {"subject_id", subject_id}};
    tex.save(out / "artifacts" / "canvas");
    fs::create_directories(out / "renders");
    for (size_t i = 0; i < subject_corpus.samples.size(); ++i) {
        Grid r = cv.render(subject_corpus.samples[i].pose);
        write_pgm(out / "renders" / ("edited_pose" + std::to_string(i) + ".pgm"), r);
    }
    write_run_record(out, "edit", cfg,
                     {out / "artifacts" / "canvas", out / "traces" / "edit_trace.csv",
                      out / "renders"});
    std::printf("edit: canvas texture and renders written\n");
    return 0;
}

int cmd_eval(const json& cfg, const fs::path& out) {
    auto corpus = load_corpus_artifact(out, "corpus");
    auto probe = ensure_probe(cfg, out);
    int subject_id = cfg.at("edit").at("subject_id");
    int attr = config::attr_index(cfg.at("edit").at("attr"));
    auto subject_corpus = ablation::subject_slice(corpus, subject_id);
    auto targets = ablation::make_targets(subject_corpus, subject_id, attr);

    require_artifact(out / "artifacts" / "canvas", "edit");
    auto tex = TensorContainer::load(out / "artifacts" / "canvas");
    canvas::Canvas cv(subject_corpus.samples.at(0).subject, subject_corpus.resolution());
    cv.mask_dilation = config::edit_config(cfg).mask_dilation;
    cv.texture.v = tex.data("texture");

    std::vector<Grid> renders;
    double min_iou = 1.0;
    for (size_t i = 0; i < subject_corpus.samples.size(); ++i) {
        Grid r = cv.render(subject_corpus.samples[i].pose);
        min_iou = std::min(min_iou, eval::structure_iou(r, targets.edited_masks[i], 0.04));
        renders.push_back(std::move(r));
    }
    double alignment = eval::edit_alignment(probe, renders, attr);
    double alignment_before = eval::edit_alignment(probe, targets.unedited, attr);
    double identity = eval::identity_score(probe, renders, subject_id);
    double fr_edit = eval::frechet_distance(probe, renders, targets.gt_edited);
    double fr_base = eval::frechet_distance(probe, targets.unedited, targets.gt_edited);

    CsvWriter csv({"run_id", "config_hash", "alignment", "alignment_delta", "identity", "min_iou",
                   "frechet_to_gt", "frechet_baseline"});
    csv.add_row({static_cast<double>(config::master_seed(cfg)),
                 static_cast<double>(config::config_hash(cfg) & 0xFFFFFFFFull), alignment,
                 alignment - alignment_before, identity, min_iou, fr_edit, fr_base});
    fs::create_directories(out / "traces");
    csv.save(out / "traces" / "metrics.csv");
    write_run_record(out, "eval", cfg, {out / "traces" / "metrics.csv"});
    std::printf("eval: alignment=%.3f (delta %.3f) identity=%.3f min_iou=%.3f frechet=%.3f "
                "(baseline %.3f)\n",
                alignment, alignment - alignment_before, identity, min_iou, fr_edit, fr_base);
    return 0;
}

int cmd_ablate(const json& cfg, const fs::path& out) {
    auto corpus = load_corpus_artifact(out, "corpus");
    auto sched = config::schedule(cfg);
    auto base = scorenet::ScoreNet::load(require_artifact(out / "models" / "base", "train-base"));
    auto pers =
        scorenet::ScoreNet::load(require_artifact(out / "models" / "personalized", "finetune"));
    auto probe = ensure_probe(cfg, out);

    int subject_id = cfg.at("edit").at("subject_id");
    int attr = config::attr_index(cfg.at("edit").at("attr"));
    auto subject_corpus = ablation::subject_slice(corpus, subject_id);
    auto targets = ablation::make_targets(subject_corpus, subject_id, attr);
    auto edit_cfg = config::edit_config(cfg);

    CsvWriter csv({"arm", "alignment", "identity", "min_iou", "frechet_to_gt", "combined"});
    int arm_idx = 0;
    for (const auto& arm : ablation::ablation_ladder()) {
        auto arm_cfg = ablation::arm_edit_config(
            edit_cfg, arm, derive_seed(config::master_seed(cfg), "ablate/" + arm.name));
        auto m = ablation::run_arm(arm, arm_cfg, base, pers, subject_corpus, sched, probe, targets);
        csv.add_row({static_cast<double>(arm_idx++), m.alignment, m.identity, m.min_iou,
                     m.frechet_gt, m.combined});
        std::printf("ablate %-14s alignment=%.3f identity=%.3f min_iou=%.3f frechet=%.3f "
                    "combined=%.3f\n",
                    arm.name.c_str(), m.alignment, m.identity, m.min_iou, m.frechet_gt,
                    m.combined);
    }
    fs::create_directories(out / "traces");
    csv.save(out / "traces" / "ablation.csv");
    write_run_record(out, "ablate", cfg, {out / "traces" / "ablation.csv"});
    return 0;
}

int cmd_anneal_dump(const json& cfg, const fs::path& out) {
    auto acfg = config::anneal_config(cfg);
    CsvWriter csv({"tau", "t1", "k", "t2", "v"});
    for (long tau = 0; tau <= acfg.N; tau += std::max<long>(1, acfg.N / 1000)) {
        auto st = anneal::state_at(tau, acfg);
        csv.add_row({static_cast<double>(tau), st.t1, st.k, st.t2, st.v});
    }
    fs::create_directories(out / "traces");
    csv.save(out / "traces" / "anneal_schedule.csv");
    write_run_record(out, "anneal-dump", cfg, {out / "traces" / "anneal_schedule.csv"});
    auto st0 = anneal::state_at(0, acfg);
    std::printf("anneal-dump: tau=0 -> t1=%g k=%g t2=%g v=%g\n", st0.t1, st0.k, st0.t2, st0.v);
    return 0;
}

// Minimal CSV line plot: each non-header column becomes a polyline over a
// white background, rows indexed left to right.
int cmd_plot(const json& cfg, const fs::path& out, const std::string& csv_path) {
    std::string text = read_text(require_artifact(csv_path, "the producing subcommand"));
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw config::ConfigError({"plot: no data rows in " + csv_path});

    const int W = 512, H = 256;
    Grid img(H, W, 1.0);
    size_t cols = rows[0].size();
    for (size_t col = 1; col < cols; ++col) {
        double lo = 1e300, hi = -1e300;
        for (const auto& r : rows) {
            lo = std::min(lo, r[col]);
            hi = std::max(hi, r[col]);
        }
        if (hi <= lo) hi = lo + 1.0;
        double shade = 0.8 * static_cast<double>(col - 1) / static_cast<double>(cols > 2 ? cols - 2 : 1);
        for (size_t i = 0; i + 1 < rows.size(); ++i) {
            int x0 = static_cast<int>(static_cast<double>(i) / (rows.size() - 1) * (W - 1));
            int x1 = static_cast<int>(static_cast<double>(i + 1) / (rows.size() - 1) * (W - 1));
            int y0 = static_cast<int>((1.0 - (rows[i][col] - lo) / (hi - lo)) * (H - 1));
            int y1 = static_cast<int>((1.0 - (rows[i + 1][col] - lo) / (hi - lo)) * (H - 1));
            int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
            for (int s = 0; s <= steps; ++s) {
                int x = x0 + (x1 - x0) * s / steps;
                int y = y0 + (y1 - y0) * s / steps;
                img(y, x) = shade;
            }
        }
    }
    fs::create_directories(out / "plots");
    fs::path png = out / "plots" / (fs::path(csv_path).stem().string() + ".pgm");
    write_pgm(png, img);
    write_run_record(out, "plot", cfg, {png});
    std::printf("plot: wrote %s\n", png.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale text-driven avatar editing laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs/default";
    std::vector<std::string> overrides;
    std::string plot_csv;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--set", overrides, "dotted-key overrides, e.g. train.iterations=100");

    std::map<std::string, int> chosen;
    for (const char* name : {"gen-data", "train-base", "finetune", "edit", "eval", "ablate",
                             "anneal-dump", "plot"}) {
        auto* sub = app.add_subcommand(name);
        sub->fallthrough();  // allow --out/--set after the subcommand name
        if (std::string(name) == "plot")
            sub->add_option("csv", plot_csv, "CSV file to plot")->required();
        sub->callback([&chosen, name] { chosen[name] = 1; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        json user = json::object();
        if (!config_path.empty()) user = sdslab::load_json(config_path);
        json cfg = sdslab::config::resolve(user, overrides);
        sdslab::fs::path out(out_dir);
        sdslab::fs::create_directories(out);

        if (chosen.count("gen-data")) return cmd_gen_data(cfg, out);
        if (chosen.count("train-base")) return cmd_train_base(cfg, out);
        if (chosen.count("finetune")) return cmd_finetune(cfg, out);
        if (chosen.count("edit")) return cmd_edit(cfg, out);
        if (chosen.count("eval")) return cmd_eval(cfg, out);
        if (chosen.count("ablate")) return cmd_ablate(cfg, out);
        if (chosen.count("anneal-dump")) return cmd_anneal_dump(cfg, out);
        if (chosen.count("plot")) return cmd_plot(cfg, out, plot_csv);
        std::fprintf(stderr, "no subcommand\n");
        return 2;
    } catch (const sdslab::config::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const sdslab::diffusion::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 3;
    } catch (const MissingArtifactError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 4;
    } catch (const sdslab::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
