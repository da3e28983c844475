#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "sdslab/synthdata.hpp"

using namespace sdslab;
using namespace sdslab::synthdata;

TEST_CASE("make_subject is deterministic and in range") {
    CHECK(make_subject(12345) == make_subject(12345));
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        auto s = make_subject(seed);
        CHECK(s.head_radius >= 0.10);
        CHECK(s.head_radius <= 0.18);
        CHECK(s.body_width >= 0.15);
        CHECK(s.body_width <= 0.30);
        CHECK(s.texture_phase >= 0.0);
        CHECK(s.texture_phase < 2.0 * M_PI);
        CHECK(s.base_shade >= 0.3);
        CHECK(s.base_shade <= 0.8);
    }
}

TEST_CASE("distinct seeds almost surely give distinct subjects") {
    int collisions = 0;
    for (uint64_t seed = 0; seed < 1000; ++seed)
        if (make_subject(2 * seed) == make_subject(2 * seed + 1)) ++collisions;
    CHECK(collisions == 0);
}

TEST_CASE("render_figure rejects out-of-range pose") {
    auto s = make_subject(1);
    CHECK_THROWS_AS(render_figure(s, 1.5, {}), std::out_of_range);
    CHECK_THROWS_AS(render_figure(s, -1.5, {}), std::out_of_range);
}

TEST_CASE("render_figure is deterministic") {
    auto s = make_subject(2);
    auto a = render_figure(s, 0.4, {});
    auto b = render_figure(s, 0.4, {});
    CHECK(a.image.v == b.image.v);
    CHECK(a.structure.v == b.structure.v);
    CHECK(a.uv_u.v == b.uv_u.v);
    CHECK(a.mask.v == b.mask.v);
}

TEST_CASE("pose zero figure is left-right symmetric within one pixel") {
    auto s = make_subject(3);
    auto f = render_figure(s, 0.0, {});
    int res = f.mask.h;
    int asym = 0;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            if (f.mask(y, x) != f.mask(y, res - 1 - x)) ++asym;
    // Mirror partner of column x is res-1-x; allow a one-pixel band.
    CHECK(asym <= res);
}

TEST_CASE("figure invariants: uv defined iff mask, values clamped") {
    for (uint64_t seed : {0ull, 7ull, 99ull}) {
        auto s = make_subject(seed);
        auto f = render_figure(s, 0.3, {true, true, true});
        for (int y = 0; y < f.image.h; ++y)
            for (int x = 0; x < f.image.w; ++x) {
                bool in = f.mask(y, x) != 0.0;
                CHECK((f.uv_u(y, x) >= 0.0) == in);
                CHECK((f.uv_v(y, x) >= 0.0) == in);
                CHECK(f.image(y, x) >= 0.0);
                CHECK(f.image(y, x) <= 1.0);
                if (in) {
                    CHECK(f.uv_u(y, x) <= 1.0);
                    CHECK(f.uv_v(y, x) <= 1.0);
                }
            }
    }
}

TEST_CASE("structure support is inside the mask (hence inside its dilation)") {
    auto s = make_subject(5);
    auto f = render_figure(s, -0.5, {true, false, true});
    for (int y = 0; y < f.structure.h; ++y)
        for (int x = 0; x < f.structure.w; ++x)
            if (f.structure(y, x) != 0.0) CHECK(f.mask(y, x) == 1.0);
}

TEST_CASE("hat pixels lie strictly above the head-top row") {
    for (uint64_t seed : {1ull, 4ull, 42ull}) {
        auto s = make_subject(seed);
        auto plain = render_figure(s, 0.2, {});
        auto hat = render_figure(s, 0.2, {true, false, false});
        int res = plain.image.h;
        // Head-top row: topmost masked row of the plain figure.
        int head_top = res;
        for (int y = 0; y < res && head_top == res; ++y)
            for (int x = 0; x < res; ++x)
                if (plain.mask(y, x) != 0.0) {
                    head_top = y;
                    break;
                }
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x)
                if (hat.image(y, x) != plain.image(y, x)) CHECK(y < head_top);
    }
}

TEST_CASE("stripes toggling changes only torso pixels") {
    auto s = make_subject(6);
    auto plain = render_figure(s, 0.1, {});
    auto striped = render_figure(s, 0.1, {false, true, false});
    int res = plain.image.h;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            if (striped.image(y, x) != plain.image(y, x))
                CHECK(plain.part[static_cast<size_t>(y) * res + x] ==
                      static_cast<uint8_t>(Part::torso));
}

TEST_CASE("uv consistency: shared texels across poses carry the same canonical color") {
    auto s = make_subject(8);
    auto f1 = render_figure(s, -0.6, {});
    auto f2 = render_figure(s, 0.6, {});
    int res = f1.image.h;
    std::map<std::pair<int, int>, double> texel_color;
    auto texel = [](double u, double v) {
        return std::pair<int, int>(static_cast<int>(u * kCanonicalRes),
                                   static_cast<int>(v * kCanonicalRes));
    };
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            if (f1.mask(y, x) != 0.0)
                texel_color[texel(f1.uv_u(y, x), f1.uv_v(y, x))] =
                    canonical_color(s, f1.uv_u(y, x), f1.uv_v(y, x));
    int shared = 0;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            if (f2.mask(y, x) != 0.0) {
                auto key = texel(f2.uv_u(y, x), f2.uv_v(y, x));
                auto it = texel_color.find(key);
                if (it == texel_color.end()) continue;
                ++shared;
                CHECK(std::abs(canonical_color(s, f2.uv_u(y, x), f2.uv_v(y, x)) - it->second) <
                      1e-6);
            }
    CHECK(shared > 50);
}

TEST_CASE("build_corpus counts and determinism") {
    CorpusConfig cfg;
    cfg.subjects = 1;
    cfg.poses = 8;
    cfg.seed = 99;
    auto c = build_corpus(cfg);
    CHECK(c.samples.size() == 8);

    CorpusConfig big;
    big.subjects = 10;
    big.poses = 16;
    big.vary_hat = true;
    big.seed = 123;
    auto cb = build_corpus(big);
    CHECK(cb.samples.size() == 320);
    int hats = 0;
    for (const auto& smp : cb.samples) hats += smp.attrs.hat ? 1 : 0;
    CHECK(hats == 160);

    CHECK_THROWS_AS(build_corpus(CorpusConfig{.subjects = 0}), std::invalid_argument);
}

TEST_CASE("corpus container is byte-identical across saves and reloads") {
    CorpusConfig cfg;
    cfg.subjects = 2;
    cfg.poses = 3;
    cfg.vary_hat = true;
    cfg.seed = 321;
    auto corpus = build_corpus(cfg);

    auto d1 = fs::temp_directory_path() / "sdslab_corpus_1";
    auto d2 = fs::temp_directory_path() / "sdslab_corpus_2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    save_corpus(corpus, d1);
    save_corpus(build_corpus(cfg), d2);
    for (const char* f : {"images.bin", "structures.bin", "uv.bin", "masks.bin", "attrs.bin",
                          "manifest.json"})
        CHECK(hash_file(d1 / f) == hash_file(d2 / f));

    auto reloaded = load_corpus(d1);
    CHECK(reloaded.samples.size() == corpus.samples.size());
    CHECK(reloaded.samples[5].image.v == corpus.samples[5].image.v);
    fs::remove_all(d1);
    fs::remove_all(d2);
}
