/* Copyright (c) 2026 regpool Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// Built-in synthetic dataset: procedurally drawn digit glyphs (0-9) under
// random affine and smooth elastic deformation, rasterized with a soft wide
// pen. Deformations are strong but smooth and topology preserving, the way
// handwriting deforms. Entirely deterministic in the seed, so tests and
// demos need no downloads.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "regpool/data.hpp"
#include "regpool/rng.hpp"
#include "regpool/tensor.hpp"

namespace regpool {

struct SynthDigitsOptions {
  std::size_t samples_per_class = 100;
  std::size_t height = 28;
  std::size_t width = 28;
  std::uint64_t seed = 0;
  double deform = 0.5;  // 0 = clean glyphs; larger = stronger deformation
};

namespace detail {

using Point = std::array<double, 2>;          // (x, y) in the unit box, y down
using Polyline = std::vector<Point>;

inline void append_arc(Polyline& pts, double cx, double cy, double rx,
                       double ry, double a0, double a1, int segments) {
  for (int i = 0; i <= segments; ++i) {
    const double a = a0 + (a1 - a0) * static_cast<double>(i) / segments;
    pts.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

inline Polyline ellipse(double cx, double cy, double rx, double ry) {
  Polyline p;
  append_arc(p, cx, cy, rx, ry, 0.0, 2.0 * std::numbers::pi, 24);
  return p;
}

// Stroke skeletons for the ten digits, hand-tuned on a [0,1]^2 canvas.
// Loops are deliberately compact so their holes sit at the scale of a few
// pixels after rasterization: several class pairs (3/8, 9/7, 4/9, 5/6)
// differ mainly in whether such a small hole or gap is present, which is
// where downsampling methods genuinely part ways.
inline const std::vector<std::vector<Polyline>>& digit_glyphs() {
  static const std::vector<std::vector<Polyline>> glyphs = [] {
    constexpr double pi = std::numbers::pi;
    constexpr double deg = pi / 180.0;
    std::vector<std::vector<Polyline>> g(10);
    g[0] = {ellipse(0.50, 0.50, 0.155, 0.24)};
    g[1] = {{{0.40, 0.27}, {0.54, 0.14}, {0.52, 0.88}}};
    {
      Polyline two;
      append_arc(two, 0.48, 0.30, 0.18, 0.16, pi, 2.0 * pi + 0.40, 12);
      two.push_back({0.28, 0.84});
      two.push_back({0.70, 0.84});
      g[2] = {two};
    }
    {
      // an '8' whose loops are broken open on the left by small gaps
      Polyline upper, lower;
      append_arc(upper, 0.50, 0.33, 0.115, 0.105, -145.0 * deg, 145.0 * deg, 16);
      append_arc(lower, 0.50, 0.67, 0.130, 0.115, -145.0 * deg, 145.0 * deg, 16);
      g[3] = {upper, lower};
    }
    g[4] = {{{0.58, 0.13}, {0.28, 0.56}, {0.72, 0.56}},
            {{0.61, 0.32}, {0.61, 0.88}}};
    {
      Polyline five = {{0.68, 0.14}, {0.35, 0.14}, {0.33, 0.42}};
      append_arc(five, 0.46, 0.62, 0.145, 0.135, -115.0 * deg, 170.0 * deg, 14);
      g[5] = {five};
    }
    g[6] = {{{0.60, 0.12}, {0.42, 0.38}, {0.37, 0.60}},
            ellipse(0.48, 0.67, 0.115, 0.105)};
    g[7] = {{{0.28, 0.16}, {0.72, 0.16}, {0.44, 0.88}}};
    g[8] = {ellipse(0.50, 0.33, 0.115, 0.105), ellipse(0.50, 0.67, 0.130, 0.115)};
    g[9] = {ellipse(0.52, 0.34, 0.115, 0.105),
            {{0.635, 0.36}, {0.60, 0.62}, {0.50, 0.88}}};
    return g;
  }();
  return glyphs;
}

inline double segment_distance(const Point& p, const Point& a, const Point& b) {
  const double abx = b[0] - a[0], aby = b[1] - a[1];
  const double apx = p[0] - a[0], apy = p[1] - a[1];
  const double len2 = abx * abx + aby * aby;
  double t = len2 > 0.0 ? (apx * abx + apy * aby) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = apx - t * abx, dy = apy - t * aby;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

/// Generate `samples_per_class` deformed renderings of each digit glyph.
/// Samples are ordered class-major (all 0s, then all 1s, ...); each sample's
/// deformation derives from the seed alone, not generation order.
inline LabeledDataset make_synth_digits(const SynthDigitsOptions& opt) {
  constexpr double pi = std::numbers::pi;
  const auto& glyphs = detail::digit_glyphs();
  const std::size_t n = 10 * opt.samples_per_class;

  LabeledDataset ds;
  ds.images = Tensor::zeros({n, 1, opt.height, opt.width});
  ds.labels.reserve(n);
  ds.num_classes = 10;
  for (int k = 0; k < 10; ++k) ds.class_names.push_back(std::to_string(k));

  // soft-pen shoulder, in canvas units rather than pixels: strokes fall off
  // as smooth ramps whose width scales with the glyph, not the raster
  const double aa = 0.040;
  std::size_t sample = 0;
  for (int digit = 0; digit < 10; ++digit) {
    for (std::size_t rep = 0; rep < opt.samples_per_class; ++rep, ++sample) {
      ds.labels.push_back(digit);
      Rng rng(mix64(opt.seed ^ mix64(0x5de1a9 + sample)));

      const double d = opt.deform;
      const double theta = d * (rng.unit() * 2.0 - 1.0) * 0.20;
      const double sx = 1.0 + d * (rng.unit() * 2.0 - 1.0) * 0.13;
      const double sy = 1.0 + d * (rng.unit() * 2.0 - 1.0) * 0.13;
      const double shear = d * (rng.unit() * 2.0 - 1.0) * 0.13;
      const double tx = d * (rng.unit() * 2.0 - 1.0) * 0.07;
      const double ty = d * (rng.unit() * 2.0 - 1.0) * 0.07;
      // two-band sinusoidal warp: neighboring parts shift smoothly but in
      // sample-specific directions, so strokes bend without tearing
      const double amp_x = d * (0.022 + rng.unit() * 0.028);
      const double amp_y = d * (0.022 + rng.unit() * 0.028);
      const double amp_x2 = d * (0.012 + rng.unit() * 0.016);
      const double amp_y2 = d * (0.012 + rng.unit() * 0.016);
      const double freq_x = 0.5 + rng.unit() * 0.6;
      const double freq_y = 0.5 + rng.unit() * 0.6;
      const double freq_x2 = 1.3 + rng.unit() * 0.9;
      const double freq_y2 = 1.3 + rng.unit() * 0.9;
      const double phase_x = rng.unit() * 2.0 * pi;
      const double phase_y = rng.unit() * 2.0 * pi;
      const double phase_x2 = rng.unit() * 2.0 * pi;
      const double phase_y2 = rng.unit() * 2.0 * pi;
      // pen width and tremor of the control points
      const double radius = 0.040 + rng.unit() * 0.015;
      const double tremor = d * 0.007;

      const double ct = std::cos(theta), st = std::sin(theta);
      auto warp = [&](detail::Point p) -> detail::Point {
        double x = p[0] - 0.5, y = p[1] - 0.5;
        x = sx * x + shear * y;
        y = sy * y;
        const double rx = ct * x - st * y, ry = st * x + ct * y;
        x = rx + 0.5 + tx;
        y = ry + 0.5 + ty;
        x += amp_x * std::sin(2.0 * pi * (freq_y * y) + phase_x) +
             amp_x2 * std::sin(2.0 * pi * (freq_y2 * y) + phase_x2);
        y += amp_y * std::sin(2.0 * pi * (freq_x * x) + phase_y) +
             amp_y2 * std::sin(2.0 * pi * (freq_x2 * x) + phase_y2);
        return {x, y};
      };

      double* img = ds.images.data() + sample * opt.height * opt.width;
      const auto draw_segment = [&](const detail::Point& a, const detail::Point& b,
                                    double rad, double intensity) {
        const double pad = rad + 2.0 * aa;
        const double x0 = std::min(a[0], b[0]) - pad;
        const double x1 = std::max(a[0], b[0]) + pad;
        const double y0 = std::min(a[1], b[1]) - pad;
        const double y1 = std::max(a[1], b[1]) + pad;
        const auto clamp_row = [&](double v) {
          return std::clamp(static_cast<std::int64_t>(std::floor(v * static_cast<double>(opt.height))),
                            std::int64_t{0}, static_cast<std::int64_t>(opt.height) - 1);
        };
        const auto clamp_col = [&](double v) {
          return std::clamp(static_cast<std::int64_t>(std::floor(v * static_cast<double>(opt.width))),
                            std::int64_t{0}, static_cast<std::int64_t>(opt.width) - 1);
        };
        for (std::int64_t r = clamp_row(y0); r <= clamp_row(y1); ++r) {
          for (std::int64_t c = clamp_col(x0); c <= clamp_col(x1); ++c) {
            const detail::Point p = {(static_cast<double>(c) + 0.5) / static_cast<double>(opt.width),
                                     (static_cast<double>(r) + 0.5) / static_cast<double>(opt.height)};
            const double dist = detail::segment_distance(p, a, b);
            const double cover = std::clamp((rad + aa - dist) / (2.0 * aa), 0.0, 1.0);
            double& px = img[static_cast<std::size_t>(r) * opt.width + static_cast<std::size_t>(c)];
            px = std::max(px, intensity * cover);
          }
        }
      };

      // Deform the stroke geometry, then resample each polyline segment so
      // the warp bends strokes rather than just moving their endpoints.
      // Control points get independent tremor before subdivision, and each
      // stroke carries its own pen pressure.
      for (const auto& line : glyphs[static_cast<std::size_t>(digit)]) {
        const double intensity = 1.0 - d * 0.25 * rng.unit();
        detail::Polyline jittered = line;
        for (auto& p : jittered) {
          p[0] += tremor * (rng.unit() * 2.0 - 1.0);
          p[1] += tremor * (rng.unit() * 2.0 - 1.0);
        }
        for (std::size_t i = 0; i + 1 < jittered.size(); ++i) {
          constexpr int kSubdiv = 4;
          detail::Point prev = warp(jittered[i]);
          for (int s = 1; s <= kSubdiv; ++s) {
            const double t = static_cast<double>(s) / kSubdiv;
            detail::Point next =
                warp({jittered[i][0] + t * (jittered[i + 1][0] - jittered[i][0]),
                      jittered[i][1] + t * (jittered[i + 1][1] - jittered[i][1])});
            draw_segment(prev, next, radius, intensity);
            prev = next;
          }
        }
      }

    }
  }
  return ds;
}

}  // namespace regpool
