#pragma once

// Core numeric building blocks shared by every module: dense row-major
// grids/tensors, the seeded counter-based generator, and small math helpers.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdslab {

// ---------------------------------------------------------------------------
// Grid: H x W scalar field, row-major doubles.
// ---------------------------------------------------------------------------
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

    double& operator()(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    double operator()(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }

    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }
};

inline void require_same_shape(const Grid& a, const Grid& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " +
                                    std::to_string(b.h) + "x" + std::to_string(b.w) + ")");
}

// C x H x W tensor, channel-major.
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

    double& at(int ch, int y, int x) { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }

    size_t size() const { return v.size(); }
};

// ---------------------------------------------------------------------------
// SplitMix64: the named counter-based generator every module seeds from.
// One 64-bit state, one 64-bit output per step; portable across platforms.
// ---------------------------------------------------------------------------
class SplitMix64 {
  public:
    explicit SplitMix64(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in (0, 1], for logs.
    double next_double_open() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Inclusive integer range.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        assert(lo <= hi);
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        // Rejection sampling keeps the draw exactly uniform.
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return lo + static_cast<int64_t>(r % span);
    }

    // Box-Muller; consumes two uniforms per pair, caches the second.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double_open();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// FNV-1a over raw bytes; used for module-seed derivation and artifact hashes.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xCBF29CE484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

// All per-module streams derive from one master seed through a tag.
inline uint64_t derive_seed(uint64_t master, const std::string& tag) {
    return SplitMix64(master ^ fnv1a(tag)).next_u64();
}

// ---------------------------------------------------------------------------
// Smooth clamp onto (0, 1): identity on [margin, 1-margin], C^1 exponential
// saturation outside. Used by the canvas so gradients never cut off hard.
// ---------------------------------------------------------------------------
struct SmoothClamp {
    double margin = 0.02;

    double value(double x) const {
        if (x < margin) return margin * std::exp((x - margin) / margin);
        if (x > 1.0 - margin) return 1.0 - margin * std::exp((1.0 - margin - x) / margin);
        return x;
    }

    double deriv(double x) const {
        if (x < margin) return std::exp((x - margin) / margin);
        if (x > 1.0 - margin) return std::exp((1.0 - margin - x) / margin);
        return 1.0;
    }
};

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace sdslab
