/* Copyright 2026 The ctxdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Slow, independent reference implementations shared by the unit and
// acceptance tests. None of these call into the code they check.

#ifndef CTXDET_TESTS_ORACLES_HPP_
#define CTXDET_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ctxdet/geometry.hpp"
#include "ctxdet/tensor.hpp"

namespace ctxdet::oracle {

/// Convex quadrilateral: four sorted angles around a random center.
inline std::vector<Point2> random_convex_quad(std::mt19937_64& rng, double extent = 100.0) {
  std::uniform_real_distribution<double> pos(0.25 * extent, 0.75 * extent);
  std::uniform_real_distribution<double> rad(0.08 * extent, 0.3 * extent);
  std::uniform_real_distribution<double> ang(0.0, 2 * std::numbers::pi);
  while (true) {
    const Point2 c{pos(rng), pos(rng)};
    double a[4];
    for (double& x : a) x = ang(rng);
    std::sort(a, a + 4);
    bool spread = true;
    for (int i = 0; i < 4; ++i) {
      const double gap = i < 3 ? a[i + 1] - a[i] : a[0] + 2 * std::numbers::pi - a[3];
      if (gap < 0.3 || gap > std::numbers::pi - 0.05) spread = false;
    }
    if (!spread) continue;
    std::vector<Point2> pts;
    for (double t : a) {
      const double r = rad(rng);
      pts.push_back({c.x + r * std::cos(t), c.y + r * std::sin(t)});
    }
    return pts;
  }
}

/// Crossing-number point test on raw vertices.
inline bool inside(const std::vector<Point2>& poly, double x, double y) {
  bool in = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = poly[i];
    const Point2& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

/// IoU by sampling a grid x grid lattice over [0, extent)^2.
inline double raster_iou(const std::vector<Point2>& a, const std::vector<Point2>& b,
                         double extent, int grid) {
  const double cell = extent / grid;
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (int i = 0; i < grid; ++i) {
    const double y = (i + 0.5) * cell;
    for (int j = 0; j < grid; ++j) {
      const double x = (j + 0.5) * cell;
      const bool ia = inside(a, x, y);
      const bool ib = inside(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

/// Smallest bounding-rectangle area over orientations sampled every `step_deg`.
inline double angle_sweep_min_area(const std::vector<Point2>& pts, double step_deg) {
  double best = INFINITY;
  for (double deg = 0.0; deg < 90.0; deg += step_deg) {
    const double t = deg * std::numbers::pi / 180.0;
    const double c = std::cos(t);
    const double s = std::sin(t);
    double u0 = INFINITY, u1 = -INFINITY, v0 = INFINITY, v1 = -INFINITY;
    for (const Point2& p : pts) {
      const double u = c * p.x + s * p.y;
      const double v = -s * p.x + c * p.y;
      u0 = std::min(u0, u);
      u1 = std::max(u1, u);
      v0 = std::min(v0, v);
      v1 = std::max(v1, v);
    }
    best = std::min(best, (u1 - u0) * (v1 - v0));
  }
  return best;
}

/// Interval that holds the true minimum given only the `step_deg` samples:
/// the best sample is an upper bound, and the steeper neighbouring slope,
/// extended over one step, gives the lower bound.
struct AreaBracket {
  double lo = 0;
  double hi = 0;
};

inline AreaBracket angle_sweep_bracket(const std::vector<Point2>& pts, double step_deg) {
  const int n = static_cast<int>(std::lround(90.0 / step_deg));
  std::vector<double> area(n);
  for (int k = 0; k < n; ++k) {
    const double t = k * step_deg * std::numbers::pi / 180.0;
    double u0 = INFINITY, u1 = -INFINITY, v0 = INFINITY, v1 = -INFINITY;
    for (const Point2& p : pts) {
      const double u = std::cos(t) * p.x + std::sin(t) * p.y;
      const double v = -std::sin(t) * p.x + std::cos(t) * p.y;
      u0 = std::min(u0, u);
      u1 = std::max(u1, u);
      v0 = std::min(v0, v);
      v1 = std::max(v1, v);
    }
    area[k] = (u1 - u0) * (v1 - v0);
  }
  // The area repeats with period 90 degrees, so neighbours wrap.
  const int k = static_cast<int>(std::min_element(area.begin(), area.end()) - area.begin());
  const double rise = std::max(area[(k + n - 1) % n], area[(k + 1) % n]) - area[k];
  return {area[k] - rise, area[k]};
}

/// Greedy suppression written from the definition: walk candidates by
/// (score desc, index asc) and keep one iff it overlaps no kept one by more
/// than the threshold. Pairwise IoUs are precomputed by the caller.
inline std::vector<std::size_t> brute_force_nms(const std::vector<double>& scores,
                                                const std::vector<std::vector<double>>& iou,
                                                double threshold) {
  const std::size_t n = scores.size();
  std::vector<bool> used(n, false);
  std::vector<std::size_t> kept;
  for (std::size_t round = 0; round < n; ++round) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      if (pick == n || scores[i] > scores[pick]) pick = i;
    }
    used[pick] = true;
    bool ok = true;
    for (std::size_t k : kept) ok = ok && !(iou[pick][k] > threshold);
    if (ok) kept.push_back(pick);
  }
  return kept;
}

/// Fused score exactly as written: exp(a) / (exp(a) + exp(b)).
inline double fused_direct(double cs0, double cs1, double is0, double is1) {
  const double ea = std::exp(cs1 + is1);
  const double eb = std::exp(cs0 + is0);
  return ea / (ea + eb);
}

/// Mean of map(0, 1, y, x) over set mask pixels, pixel by pixel.
inline double masked_mean(const std::vector<std::uint8_t>& mask, int h, int w,
                          const FeatureMapD& map) {
  long double sum = 0;
  long n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask[std::size_t(y) * w + x]) {
        sum += map.at(0, 1, y, x);
        ++n;
      }
    }
  }
  return double(sum / n);
}

/// Two-class per-pixel cross-entropy, -log(softmax) written out per pixel.
inline double naive_ce(const FeatureMapD& logits, const std::vector<std::uint8_t>& labels,
                       const std::vector<std::uint8_t>& keep) {
  long double total = 0;
  long n = 0;
  for (int y = 0; y < logits.h(); ++y) {
    for (int x = 0; x < logits.w(); ++x) {
      const std::size_t i = std::size_t(y) * logits.w() + x;
      if (!keep[i]) continue;
      const long double l0 = logits.at(0, 0, y, x);
      const long double l1 = logits.at(0, 1, y, x);
      const long double target = labels[i] ? l1 : l0;
      total += std::log(std::exp(l0) + std::exp(l1)) - target;
      ++n;
    }
  }
  return double(total / n);
}

}  // namespace ctxdet::oracle

#endif  // CTXDET_TESTS_ORACLES_HPP_
