#pragma once

// Procedural articulated toy figures: controllable identity, a single arm-pose
// scalar, and boolean edit attributes, rendered together with ground-truth
// structure maps, canonical UV maps, and foreground masks.
//
// Every figure pixel is colored by sampling a procedural canonical texture
// through its UV coordinate, so texture content is pose-invariant by
// construction. UV coordinates snap to canonical texel centers: two poses
// observing the same texel observe exactly the same canonical value.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdslab/core.hpp"
#include "sdslab/io.hpp"

namespace sdslab::synthdata {

constexpr int kGeneratorVersion = 1;
constexpr int kCanonicalRes = 64;   // canonical texture is kCanonicalRes^2
constexpr double kPoseMin = -M_PI / 3.0;
constexpr double kPoseMax = M_PI / 3.0;

// Part ids used for interior structure edges and UV region lookup.
enum class Part : uint8_t { background = 0, leg_l, leg_r, torso, arm_l, arm_r, head, hat, item };

struct SubjectSpec {
    uint64_t seed = 0;
    double head_radius = 0.14;   // fraction of image height, [0.10, 0.18]
    double body_width = 0.22;    // fraction of image width, [0.15, 0.30]
    double texture_phase = 0.0;  // radians, [0, 2pi)
    double base_shade = 0.55;    // gray level, [0.3, 0.8]

    bool operator==(const SubjectSpec&) const = default;
};

struct Attributes {
    bool hat = false;
    bool stripes = false;
    bool held_item = false;

    bool operator==(const Attributes&) const = default;
};

struct FigureSample {
    Grid image;      // [0,1] gray
    Grid structure;  // silhouette 1.0, interior part edges 0.5
    Grid uv_u;       // canonical u, or -1 outside mask
    Grid uv_v;       // canonical v, or -1 outside mask
    Grid mask;       // 0/1
    std::vector<uint8_t> part;  // Part per pixel, row-major
    double pose = 0.0;
    Attributes attrs;
    SubjectSpec subject;
    int subject_id = 0;  // index within its corpus, 0 for standalone renders
};

// [OP] make_subject
inline SubjectSpec make_subject(uint64_t seed) {
    SplitMix64 rng(seed);
    SubjectSpec s;
    s.seed = seed;
    s.head_radius = rng.uniform(0.10, 0.18);
    s.body_width = rng.uniform(0.15, 0.30);
    s.texture_phase = rng.uniform(0.0, 2.0 * M_PI);
    s.base_shade = rng.uniform(0.3, 0.8);
    return s;
}

// Procedural canonical texture; range [0.05, 0.95] so the canvas smooth clamp
// is exactly the identity on base figure pixels.
inline double canonical_color(const SubjectSpec& s, double u, double v) {
    double x = s.base_shade + 0.15 * std::sin(2.0 * M_PI * (3.0 * u + 5.0 * v) + s.texture_phase);
    return x < 0.05 ? 0.05 : (x > 0.95 ? 0.95 : x);
}

// Snap a continuous canonical coordinate to its texel center.
inline double snap_uv(double x) {
    int i = static_cast<int>(std::floor(x * kCanonicalRes));
    if (i < 0) i = 0;
    if (i >= kCanonicalRes) i = kCanonicalRes - 1;
    return (i + 0.5) / kCanonicalRes;
}

namespace detail {

// Canonical-space region per part: {u0, v0, du, dv}.
inline std::array<double, 4> uv_region(Part p) {
    switch (p) {
        case Part::head:  return {0.00, 0.00, 0.45, 0.45};
        case Part::torso: return {0.50, 0.00, 0.45, 0.45};
        case Part::arm_l: return {0.00, 0.50, 0.45, 0.10};
        case Part::arm_r: return {0.00, 0.62, 0.45, 0.10};
        case Part::leg_l: return {0.50, 0.50, 0.45, 0.10};
        case Part::leg_r: return {0.50, 0.62, 0.45, 0.10};
        case Part::hat:   return {0.00, 0.76, 0.45, 0.10};
        case Part::item:  return {0.50, 0.76, 0.45, 0.10};
        default:          return {0.0, 0.0, 0.0, 0.0};
    }
}

struct FigureLayout {
    double cx, head_cy, head_r;
    double torso_x0, torso_y0, torso_x1, torso_y1;  // torso box
    double shoulder_y;
    double arm_len, arm_halfw;
    double leg_y1, leg_halfw, leg_dx;
    int head_top_row;  // first image row intersecting the head disc
};

inline FigureLayout layout(const SubjectSpec& s, int res) {
    FigureLayout L;
    double H = res;
    L.cx = 0.5 * H;
    L.head_r = s.head_radius * H;
    L.head_cy = 0.26 * H;  // leaves two rows above the largest head for the hat
    double bw = s.body_width * H;
    L.torso_x0 = L.cx - 0.5 * bw;
    L.torso_x1 = L.cx + 0.5 * bw;
    L.torso_y0 = L.head_cy + L.head_r;
    L.torso_y1 = 0.70 * H;
    L.shoulder_y = L.torso_y0 + 0.10 * (L.torso_y1 - L.torso_y0);
    L.arm_len = 0.28 * H;
    L.arm_halfw = 0.035 * H;
    L.leg_y1 = 0.92 * H;
    L.leg_halfw = 0.045 * H;
    L.leg_dx = 0.25 * bw;
    L.head_top_row = static_cast<int>(std::floor(L.head_cy - L.head_r));
    return L;
}

// Distance decomposition of pixel center p against a capsule segment from
// `a` along unit direction `d` of length `len`. Local coords: (along, across).
struct CapsuleHit {
    bool inside;
    double along_frac;   // [0,1]
    double across_frac;  // [0,1], 0.5 on the axis
};

inline CapsuleHit capsule_hit(double px, double py, double ax, double ay, double dx, double dy,
                              double len, double halfw) {
    double rx = px - ax, ry = py - ay;
    double along = rx * dx + ry * dy;
    double across = rx * -dy + ry * dx;
    if (along < 0.0 || along > len || std::abs(across) > halfw) return {false, 0, 0};
    return {true, along / len, 0.5 * (across / halfw + 1.0)};
}

}  // namespace detail

// [OP] render_figure
inline FigureSample render_figure(const SubjectSpec& subject, double pose, const Attributes& attrs,
                                  int res = 32) {
    if (pose < kPoseMin || pose > kPoseMax)
        throw std::out_of_range("render_figure: pose " + std::to_string(pose) +
                                " outside [-pi/3, pi/3]");

    const auto L = detail::layout(subject, res);
    FigureSample f;
    f.image = Grid(res, res, 0.0);
    f.structure = Grid(res, res, 0.0);
    f.uv_u = Grid(res, res, -1.0);
    f.uv_v = Grid(res, res, -1.0);
    f.mask = Grid(res, res, 0.0);
    f.part.assign(static_cast<size_t>(res) * res, 0);
    f.pose = pose;
    f.attrs = attrs;
    f.subject = subject;

    // Arm frames: the scalar pose rotates both arms outward, mirrored, so the
    // pose=0 figure is left-right symmetric. Angle measured from straight down.
    const double sxl = L.torso_x0, sxr = L.torso_x1, sy = L.shoulder_y;
    const double drx = std::sin(pose), dry = std::cos(pose);    // right arm direction
    const double dlx = -std::sin(pose), dly = std::cos(pose);   // mirrored left arm

    auto classify = [&](double px, double py, Part& part, double& a, double& b) {
        part = Part::background;
        // Painter's order: legs, torso, arms, head. Later parts win.
        auto leg = [&](double cx0, Part id) {
            if (py >= L.torso_y1 && py <= L.leg_y1 && std::abs(px - cx0) <= L.leg_halfw) {
                part = id;
                a = (px - (cx0 - L.leg_halfw)) / (2.0 * L.leg_halfw);
                b = (py - L.torso_y1) / (L.leg_y1 - L.torso_y1);
            }
        };
        leg(L.cx - L.leg_dx, Part::leg_l);
        leg(L.cx + L.leg_dx, Part::leg_r);
        if (px >= L.torso_x0 && px <= L.torso_x1 && py >= L.torso_y0 && py <= L.torso_y1) {
            part = Part::torso;
            a = (px - L.torso_x0) / (L.torso_x1 - L.torso_x0);
            b = (py - L.torso_y0) / (L.torso_y1 - L.torso_y0);
        }
        if (auto h = detail::capsule_hit(px, py, sxl, sy, dlx, dly, L.arm_len, L.arm_halfw);
            h.inside) {
            part = Part::arm_l;
            a = h.along_frac;
            b = h.across_frac;
        }
        if (auto h = detail::capsule_hit(px, py, sxr, sy, drx, dry, L.arm_len, L.arm_halfw);
            h.inside) {
            part = Part::arm_r;
            a = h.along_frac;
            b = h.across_frac;
        }
        double hx = px - L.cx, hy = py - L.head_cy;
        if (hx * hx + hy * hy <= L.head_r * L.head_r) {
            part = Part::head;
            a = 0.5 * (hx / L.head_r + 1.0);
            b = 0.5 * (hy / L.head_r + 1.0);
        }
    };

    // Hat: exactly two rows strictly above the head-top row, slightly wider
    // than the head. Held item: a small block at the right hand.
    const double hat_x0 = L.cx - L.head_r - 1.0, hat_x1 = L.cx + L.head_r + 1.0;
    const int hat_row1 = L.head_top_row - 1, hat_row0 = L.head_top_row - 2;
    const double hand_x = sxr + drx * L.arm_len, hand_y = sy + dry * L.arm_len;
    const double item_half = 0.05 * res;

    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            double px = x + 0.5, py = y + 0.5;
            Part part;
            double a = 0.0, b = 0.0;
            classify(px, py, part, a, b);
            if (attrs.hat && y >= hat_row0 && y <= hat_row1 && px >= hat_x0 && px <= hat_x1) {
                part = Part::hat;
                a = (px - hat_x0) / (hat_x1 - hat_x0);
                b = (y == hat_row0) ? 0.25 : 0.75;
            }
            if (attrs.held_item && std::abs(px - hand_x) <= item_half &&
                std::abs(py - hand_y) <= item_half) {
                part = Part::item;
                a = 0.5 * ((px - hand_x) / item_half + 1.0);
                b = 0.5 * ((py - hand_y) / item_half + 1.0);
            }
            if (part == Part::background) continue;

            auto region = detail::uv_region(part);
            double u = snap_uv(region[0] + clamp01(a) * region[2]);
            double v = snap_uv(region[1] + clamp01(b) * region[3]);
            f.uv_u(y, x) = u;
            f.uv_v(y, x) = v;
            f.mask(y, x) = 1.0;
            f.part[static_cast<size_t>(y) * res + x] = static_cast<uint8_t>(part);

            double shade = canonical_color(subject, u, v);
            // Attribute overlays, applied after canonical sampling.
            if (part == Part::hat) shade = 0.90;
            if (part == Part::item) shade = 0.95;
            if (attrs.stripes && part == Part::torso) {
                double stripe = (static_cast<int>(std::floor(b * 6.0)) % 2 == 0) ? 0.90 : 0.10;
                shade = clamp01(0.35 * shade + 0.65 * stripe);
                if (shade < 0.05) shade = 0.05;
                if (shade > 0.95) shade = 0.95;
            }
            f.image(y, x) = shade;
        }
    }

    // Structure: silhouette pixels 1.0, interior pixels adjacent to a
    // different part 0.5. Support is a subset of the mask.
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            if (f.mask(y, x) == 0.0) continue;
            uint8_t me = f.part[static_cast<size_t>(y) * res + x];
            bool boundary = false, part_edge = false;
            const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                int ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= res || nx < 0 || nx >= res) {
                    boundary = true;
                    continue;
                }
                uint8_t other = f.part[static_cast<size_t>(ny) * res + nx];
                if (other == 0)
                    boundary = true;
                else if (other != me)
                    part_edge = true;
            }
            f.structure(y, x) = boundary ? 1.0 : (part_edge ? 0.5 : 0.0);
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------
struct CorpusConfig {
    int subjects = 10;
    int poses = 16;
    bool vary_hat = false;
    bool vary_stripes = false;
    bool vary_item = false;
    int resolution = 32;
    uint64_t seed = 0;

    // Forced attribute base value for the non-varied axes.
    Attributes base_attrs;
};

struct Corpus {
    std::vector<FigureSample> samples;
    std::vector<SubjectSpec> subjects;
    CorpusConfig config;

    int resolution() const { return config.resolution; }
};

inline double pose_of_index(int j, int poses) {
    if (poses == 1) return 0.0;
    return kPoseMin + (kPoseMax - kPoseMin) * static_cast<double>(j) / (poses - 1);
}

// [OP] build_corpus (in-memory part)
inline Corpus build_corpus(const CorpusConfig& cfg) {
    if (cfg.subjects <= 0 || cfg.poses <= 0)
        throw std::invalid_argument("build_corpus: zero-sample config");
    Corpus corpus;
    corpus.config = cfg;
    for (int i = 0; i < cfg.subjects; ++i)
        corpus.subjects.push_back(make_subject(derive_seed(cfg.seed, "subject/" + std::to_string(i))));

    std::vector<Attributes> combos;
    for (int h = 0; h < (cfg.vary_hat ? 2 : 1); ++h)
        for (int s = 0; s < (cfg.vary_stripes ? 2 : 1); ++s)
            for (int it = 0; it < (cfg.vary_item ? 2 : 1); ++it) {
                Attributes a = cfg.base_attrs;
                if (cfg.vary_hat) a.hat = h != 0;
                if (cfg.vary_stripes) a.stripes = s != 0;
                if (cfg.vary_item) a.held_item = it != 0;
                combos.push_back(a);
            }

    for (int i = 0; i < cfg.subjects; ++i)
        for (int j = 0; j < cfg.poses; ++j)
            for (const auto& attrs : combos) {
                auto f = render_figure(corpus.subjects[i], pose_of_index(j, cfg.poses), attrs,
                                       cfg.resolution);
                f.subject_id = i;
                corpus.samples.push_back(std::move(f));
            }
    return corpus;
}

// On-disk container per the shared flat-binary format.
inline void save_corpus(const Corpus& corpus, const fs::path& dir) {
    const int n = static_cast<int>(corpus.samples.size());
    const int res = corpus.resolution();
    TensorContainer c;
    std::vector<double> images, structures, uvs, poses;
    std::vector<uint8_t> masks, attrs, subject_ids;
    for (const auto& f : corpus.samples) {
        images.insert(images.end(), f.image.v.begin(), f.image.v.end());
        structures.insert(structures.end(), f.structure.v.begin(), f.structure.v.end());
        for (size_t i = 0; i < f.uv_u.v.size(); ++i) {
            uvs.push_back(f.uv_u.v[i]);
            uvs.push_back(f.uv_v.v[i]);
        }
        for (double m : f.mask.v) masks.push_back(m != 0.0 ? 1 : 0);
        poses.push_back(f.pose);
        attrs.push_back(f.attrs.hat ? 1 : 0);
        attrs.push_back(f.attrs.stripes ? 1 : 0);
        attrs.push_back(f.attrs.held_item ? 1 : 0);
        subject_ids.push_back(static_cast<uint8_t>(f.subject_id));
    }
    c.put("images", {n, res, res}, std::move(images));
    c.put("structures", {n, res, res}, std::move(structures));
    c.put("uv", {n, res, res, 2}, std::move(uvs));
    c.put("poses", {n}, std::move(poses));
    c.put_u8("masks", {n, res, res}, std::move(masks));
    c.put_u8("attrs", {n, 3}, std::move(attrs));
    c.put_u8("subject_ids", {n}, std::move(subject_ids));

    json meta;
    meta["kind"] = "corpus";
    meta["generator_version"] = kGeneratorVersion;
    meta["resolution"] = res;
    meta["count"] = n;
    meta["seed"] = std::to_string(corpus.config.seed);
    meta["subjects"] = corpus.config.subjects;
    meta["poses"] = corpus.config.poses;
    meta["vary_hat"] = corpus.config.vary_hat;
    meta["vary_stripes"] = corpus.config.vary_stripes;
    meta["vary_item"] = corpus.config.vary_item;
    meta["base_attrs"] = {corpus.config.base_attrs.hat, corpus.config.base_attrs.stripes,
                          corpus.config.base_attrs.held_item};
    json subj = json::array();
    for (const auto& s : corpus.subjects) subj.push_back(std::to_string(s.seed));
    meta["subject_seeds"] = subj;
    c.meta() = meta;
    c.save(dir);
}

inline Corpus load_corpus(const fs::path& dir) {
    TensorContainer c = TensorContainer::load(dir);
    const json& meta = c.meta();
    CorpusConfig cfg;
    cfg.resolution = meta.at("resolution");
    cfg.seed = std::stoull(meta.at("seed").get<std::string>());
    cfg.subjects = meta.at("subjects");
    cfg.poses = meta.at("poses");
    cfg.vary_hat = meta.at("vary_hat");
    cfg.vary_stripes = meta.at("vary_stripes");
    cfg.vary_item = meta.at("vary_item");
    if (meta.contains("base_attrs")) {
        cfg.base_attrs.hat = meta["base_attrs"][0];
        cfg.base_attrs.stripes = meta["base_attrs"][1];
        cfg.base_attrs.held_item = meta["base_attrs"][2];
    }
    // Regeneration from the manifest is bit-identical by the determinism
    // contract, and carries the exact double-precision fields.
    return build_corpus(cfg);
}

}  // namespace sdslab::synthdata
