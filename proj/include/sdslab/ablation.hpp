#pragma once

// End-to-end edit pipeline helpers and the ablation ladder. Each arm is the
// same edit loop with guidance/annealing switches; no code forks.

#include <string>
#include <vector>

#include "sdslab/canvas.hpp"
#include "sdslab/config.hpp"
#include "sdslab/distill.hpp"
#include "sdslab/eval.hpp"
#include "sdslab/synthdata.hpp"

namespace sdslab::ablation {

// Samples of one subject with the un-edited attribute vector; the pose/
// structure source for the edit loop.
inline synthdata::Corpus subject_slice(const synthdata::Corpus& corpus, int subject_id,
                                       const synthdata::Attributes& base_attrs = {}) {
    synthdata::Corpus out;
    out.config = corpus.config;
    out.subjects = corpus.subjects;
    for (const auto& s : corpus.samples)
        if (s.subject_id == subject_id && s.attrs == base_attrs) out.samples.push_back(s);
    return out;
}

struct ArmSpec {
    std::string name;
    bool use_structure = true;
    bool use_personalized = true;
    bool windowed_anneal = false;
    bool hifa = false;
};

inline std::vector<ArmSpec> ablation_ladder() {
    return {
        {"SDS", false, false, false, false},
        {"NA-SDS", true, false, false, false},
        {"P-SDS", false, true, false, false},
        {"PNA-SDS", true, true, false, false},
        {"PNA-SDS+HiFA", true, true, true, true},
        {"Ours", true, true, true, false},
    };
}

inline distill::EditConfig arm_edit_config(distill::EditConfig base, const ArmSpec& arm,
                                           uint64_t seed) {
    base.use_structure = arm.use_structure;
    base.use_personalized = arm.use_personalized;
    base.anneal.enabled = arm.windowed_anneal || arm.hifa;
    base.anneal.hifa_mode = arm.hifa;
    base.seed = seed;
    return base;
}

struct ArmMetrics {
    std::string name;
    double alignment = 0.0;   // target-attribute probability on edited renders
    double identity = 0.0;    // subject probability on edited renders
    double min_iou = 0.0;     // worst-pose foreground IoU vs the edited ground truth
    double frechet_gt = 0.0;  // distance to ground-truth edited renders
    double combined = 0.0;    // mean of alignment, identity, min_iou
    long iterations = 0;
};

struct EditTargets {
    std::vector<Grid> gt_edited;        // true edited subject, every pose
    std::vector<Grid> unedited;         // base renders, every pose
    std::vector<Grid> edited_masks;     // ground-truth edited foreground per pose
    int target_attr = 0;
    int subject_id = 0;
};

inline EditTargets make_targets(const synthdata::Corpus& subject_corpus, int subject_id,
                                int target_attr) {
    EditTargets t;
    t.target_attr = target_attr;
    t.subject_id = subject_id;
    for (const auto& s : subject_corpus.samples) {
        synthdata::Attributes edited = s.attrs;
        if (target_attr == 0) edited.hat = true;
        if (target_attr == 1) edited.stripes = true;
        if (target_attr == 2) edited.held_item = true;
        auto gt = synthdata::render_figure(s.subject, s.pose, edited, s.image.h);
        t.gt_edited.push_back(gt.image);
        t.unedited.push_back(s.image);
        t.edited_masks.push_back(gt.mask);
    }
    return t;
}

// Runs one arm: fresh canvas, edit loop, metrics over every pose.
inline ArmMetrics run_arm(const ArmSpec& arm, const distill::EditConfig& edit_cfg,
                          const scorenet::ScoreNet& base_net, const scorenet::ScoreNet& pers_net,
                          const synthdata::Corpus& subject_corpus,
                          const diffusion::NoiseSchedule& sched, const eval::Probe& probe,
                          const EditTargets& targets) {
    ArmMetrics m;
    m.name = arm.name;
    canvas::Canvas cv(subject_corpus.samples.at(0).subject, subject_corpus.resolution());
    auto result = distill::edit(cv, base_net, pers_net, subject_corpus, sched, edit_cfg);
    m.iterations = result.iterations_run;

    std::vector<Grid> renders;
    double min_iou = 1.0;
    for (size_t i = 0; i < subject_corpus.samples.size(); ++i) {
        Grid r = cv.render(subject_corpus.samples[i].pose);
        double iou = eval::structure_iou(r, targets.edited_masks[i], 0.04);
        if (iou < min_iou) min_iou = iou;
        renders.push_back(std::move(r));
    }
    m.alignment = eval::edit_alignment(probe, renders, targets.target_attr);
    m.identity = eval::identity_score(probe, renders, targets.subject_id);
    m.min_iou = min_iou;
    m.frechet_gt = eval::frechet_distance(probe, renders, targets.gt_edited);
    // One number per arm, averaging the three evaluation axes: edit alignment,
    // identity preservation, and pose-consistent structure.
    m.combined = (m.alignment + m.identity + m.min_iou) / 3.0;
    return m;
}

}  // namespace sdslab::ablation
