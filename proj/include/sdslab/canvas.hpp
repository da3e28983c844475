#pragma once

// Differentiable canonical residual texture. A Canvas owns an R x R residual
// over a fixed subject; rendering warps the residual to a pose through the
// ground-truth UV map (extended into a dilated mask ring so edits may grow
// slightly past the silhouette), adds it to the base figure under a smooth
// clamp, and records the bilinear warp for the backward pass.
//
// The clamp is applied base-anchored, out = base + s(base + r) - s(base), so
// a zero residual reproduces the base figure exactly at every pixel.

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <vector>

#include "sdslab/adam.hpp"
#include "sdslab/core.hpp"
#include "sdslab/synthdata.hpp"

namespace sdslab::canvas {

using synthdata::Attributes;
using synthdata::FigureSample;
using synthdata::SubjectSpec;

struct PixelWarp {
    int y = 0, x = 0;
    int idx[4] = {0, 0, 0, 0};   // flat texel indices
    double wgt[4] = {0, 0, 0, 0};
    double base = 0.0;
    double sderiv = 1.0;  // d(out)/d(residual) at the rendered point
};

struct WarpRecord {
    double pose = 0.0;
    std::vector<PixelWarp> pixels;
};

class Canvas {
  public:
    Grid texture;  // residual, initialized to zero
    SubjectSpec subject;
    int mask_dilation = 2;
    int resolution = 32;
    Attributes base_attrs;  // attributes of the un-edited base figure
    SmoothClamp clamp;

    Canvas() = default;
    Canvas(const SubjectSpec& subj, int res = 32, int texture_res = synthdata::kCanonicalRes)
        : texture(texture_res, texture_res, 0.0), subject(subj), resolution(res),
          reachable_(static_cast<size_t>(texture_res) * texture_res, 0) {}

    int texture_res() const { return texture.h; }

    // [OP] render
    Grid render(double pose) {
        FigureSample base = synthdata::render_figure(subject, pose, base_attrs, resolution);
        // Fully-accessorized geometry at the same pose: pixels the silhouette
        // could grow into, carrying their own canonical UVs (the atlas keeps
        // dedicated accessory regions), so edits there are pose-consistent
        // and never fight the body texels.
        FigureSample acc =
            synthdata::render_figure(subject, pose, Attributes{true, true, true}, resolution);
        const int res = resolution;
        const int R = texture_res();

        // Warp domain: base mask, accessory-growth pixels, and a dilated ring
        // whose UV is extended from the nearest domain pixel (breadth-first,
        // deterministic scan order).
        Grid uv_u = base.uv_u, uv_v = base.uv_v;
        std::vector<uint8_t> domain(static_cast<size_t>(res) * res, 0);
        std::deque<std::pair<int, int>> frontier;
        std::vector<int> depth(static_cast<size_t>(res) * res, -1);
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                size_t i = static_cast<size_t>(y) * res + x;
                if (base.mask(y, x) != 0.0) {
                    domain[i] = 1;
                    depth[i] = 0;
                    frontier.emplace_back(y, x);
                } else if (acc.mask(y, x) != 0.0) {
                    // Accessory pixels join the domain but do not seed the
                    // ring BFS: their atlas UVs must not bleed outward.
                    domain[i] = 1;
                    depth[i] = mask_dilation;
                    uv_u(y, x) = acc.uv_u(y, x);
                    uv_v(y, x) = acc.uv_v(y, x);
                }
            }
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        while (!frontier.empty()) {
            auto [y, x] = frontier.front();
            frontier.pop_front();
            int d = depth[static_cast<size_t>(y) * res + x];
            if (d >= mask_dilation) continue;
            for (int k = 0; k < 4; ++k) {
                int ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= res || nx < 0 || nx >= res) continue;
                size_t ni = static_cast<size_t>(ny) * res + nx;
                if (depth[ni] >= 0) continue;
                depth[ni] = d + 1;
                domain[ni] = 1;
                uv_u(ny, nx) = uv_u(y, x);
                uv_v(ny, nx) = uv_v(y, x);
                frontier.emplace_back(ny, nx);
            }
        }

        WarpRecord rec;
        rec.pose = pose;
        Grid out = base.image;
        for (int y = 0; y < res; ++y) {
            for (int x = 0; x < res; ++x) {
                if (!domain[static_cast<size_t>(y) * res + x]) continue;
                PixelWarp pw;
                pw.y = y;
                pw.x = x;
                bilinear_weights(uv_u(y, x), uv_v(y, x), R, pw.idx, pw.wgt);
                pw.base = base.image(y, x);
                double r = 0.0;
                for (int i = 0; i < 4; ++i) r += pw.wgt[i] * texture.v[static_cast<size_t>(pw.idx[i])];
                double z = pw.base + r;
                out(y, x) = pw.base + clamp.value(z) - clamp.value(pw.base);
                pw.sderiv = clamp.deriv(z);
                for (int i = 0; i < 4; ++i) reachable_[static_cast<size_t>(pw.idx[i])] = 1;
                rec.pixels.push_back(pw);
            }
        }
        records_[pose] = std::move(rec);
        return out;
    }

    // [OP] backprop_to_texture: chain rule through the smooth clamp and the
    // recorded bilinear weights.
    Grid backprop_to_texture(const Grid& pixel_grad, double pose) const {
        auto it = records_.find(pose);
        if (it == records_.end())
            throw std::logic_error("backprop_to_texture: no warp record for this pose");
        Grid tex_grad(texture.h, texture.w, 0.0);
        for (const auto& pw : it->second.pixels) {
            double g = pixel_grad(pw.y, pw.x) * pw.sderiv;
            if (g == 0.0) continue;
            for (int i = 0; i < 4; ++i)
                tex_grad.v[static_cast<size_t>(pw.idx[i])] += g * pw.wgt[i];
        }
        return tex_grad;
    }

    // [OP] step: Adam update confined to texels reachable from any rendered
    // pose's dilated mask.
    void step(const Grid& tex_grad, Adam& opt) {
        require_same_shape(tex_grad, texture, "Canvas::step");
        Grid masked = tex_grad;
        for (size_t i = 0; i < masked.v.size(); ++i) {
            if (!std::isfinite(masked.v[i]))
                throw std::runtime_error("Canvas::step: non-finite texture gradient at texel " +
                                         std::to_string(i));
            if (!reachable_[i]) masked.v[i] = 0.0;
        }
        opt.step(texture.v, masked.v);
    }

    const std::map<double, WarpRecord>& records() const { return records_; }

    static void bilinear_weights(double u, double v, int R, int idx[4], double wgt[4]) {
        double xc = u * R - 0.5, yc = v * R - 0.5;
        int x0 = static_cast<int>(std::floor(xc)), y0 = static_cast<int>(std::floor(yc));
        double fx = xc - x0, fy = yc - y0;
        if (x0 < 0) { x0 = 0; fx = 0.0; }
        if (y0 < 0) { y0 = 0; fy = 0.0; }
        if (x0 > R - 2) { x0 = R - 2; fx = 1.0; }
        if (y0 > R - 2) { y0 = R - 2; fy = 1.0; }
        idx[0] = y0 * R + x0;
        idx[1] = y0 * R + x0 + 1;
        idx[2] = (y0 + 1) * R + x0;
        idx[3] = (y0 + 1) * R + x0 + 1;
        wgt[0] = (1.0 - fy) * (1.0 - fx);
        wgt[1] = (1.0 - fy) * fx;
        wgt[2] = fy * (1.0 - fx);
        wgt[3] = fy * fx;
    }

  private:
    std::map<double, WarpRecord> records_;
    std::vector<uint8_t> reachable_;
};

}  // namespace sdslab::canvas
