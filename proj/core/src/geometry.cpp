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

#include "ctxdet/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ctxdet {

namespace {

constexpr double kPi = 3.14159265358979323846;

int orientation(Point2 a, Point2 b, Point2 c) {
  const double v = cross(b - a, c - a);
  if (v > 0.0) return 1;
  if (v < 0.0) return -1;
  return 0;
}

bool on_segment(Point2 a, Point2 b, Point2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

// Closed-segment intersection test (touching counts).
bool segments_intersect(Point2 p1, Point2 p2, Point2 q1, Point2 q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

bool is_simple(const std::vector<Point2>& v) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = v[i];
    const Point2 b = v[(i + 1) % n];
    // Adjacent edge folding back onto this one.
    const Point2 c = v[(i + 2) % n];
    if (orientation(a, b, c) == 0 && dot(b - a, c - b) < 0.0) return false;
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the wrap
      if (segments_intersect(a, b, v[j], v[(j + 1) % n])) return false;
    }
  }
  return true;
}

AxisRect bbox_of(std::span<const Point2> pts) {
  AxisRect r{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const Point2& p : pts) {
    r.x_min = std::min(r.x_min, p.x);
    r.y_min = std::min(r.y_min, p.y);
    r.x_max = std::max(r.x_max, p.x);
    r.y_max = std::max(r.y_max, p.y);
  }
  return r;
}

bool boxes_overlap(const AxisRect& a, const AxisRect& b) {
  return a.x_min < b.x_max && b.x_min < a.x_max && a.y_min < b.y_max &&
         b.y_min < a.y_max;
}

using Triangle = std::array<Point2, 3>;

// Area of the intersection of two counter-clockwise triangles
// (Sutherland-Hodgman clip of `subject` by `clip`).
double triangle_overlap(const Triangle& subject, const Triangle& clip) {
  std::array<Point2, 12> buf_a{};
  std::array<Point2, 12> buf_b{};
  std::size_t n = 3;
  std::copy(subject.begin(), subject.end(), buf_a.begin());
  Point2* in = buf_a.data();
  Point2* out = buf_b.data();
  for (int e = 0; e < 3 && n > 0; ++e) {
    const Point2 a = clip[e];
    const Point2 b = clip[(e + 1) % 3];
    const Point2 ab = b - a;
    std::size_t m = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const Point2 p = in[k];
      const Point2 q = in[(k + 1) % n];
      const double sp = cross(ab, p - a);
      const double sq = cross(ab, q - a);
      if (sp >= 0.0) out[m++] = p;
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out[m++] = p + t * (q - p);
      }
    }
    n = m;
    std::swap(in, out);
  }
  if (n < 3) return 0.0;
  return std::max(0.0, signed_area(std::span<const Point2>(in, n)));
}

struct SignedTriangle {
  Triangle tri;
  double sign;
  AxisRect box;
};

// Fan decomposition: the indicator of a simple polygon equals the signed sum
// of its fan triangles' indicators almost everywhere.
std::vector<SignedTriangle> fan(const Polygon& p) {
  std::vector<SignedTriangle> out;
  const auto& v = p.vertices();
  out.reserve(v.size());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    Triangle t{v[0], v[i], v[i + 1]};
    const double a = signed_area(t);
    if (a == 0.0) continue;
    double sign = 1.0;
    if (a < 0.0) {
      std::swap(t[1], t[2]);
      sign = -1.0;
    }
    out.push_back({t, sign, bbox_of(t)});
  }
  return out;
}

bool lexicographically_less(const Polygon& a, const Polygon& b) {
  const auto& va = a.vertices();
  const auto& vb = b.vertices();
  return std::lexicographical_compare(
      va.begin(), va.end(), vb.begin(), vb.end(),
      [](Point2 p, Point2 q) { return p.x < q.x || (p.x == q.x && p.y < q.y); });
}

double normalize_angle(double deg) {
  while (deg >= 90.0) deg -= 180.0;
  while (deg < -90.0) deg += 180.0;
  return deg;
}

}  // namespace

AxisRect AxisRect::checked(double x0, double y0, double x1, double y1) {
  AxisRect r{x0, y0, x1, y1};
  if (!(std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) &&
        std::isfinite(y1)) ||
      !r.valid()) {
    throw GeometryError("AxisRect requires x_min < x_max and y_min < y_max");
  }
  return r;
}

double box_iou(const AxisRect& a, const AxisRect& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Polygon::Polygon(std::vector<Point2> vertices) {
  for (const Point2& p : vertices) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw GeometryError("polygon vertex is not finite");
    }
  }
  // Drop repeated consecutive vertices, including an explicit closing vertex.
  std::vector<Point2> v;
  v.reserve(vertices.size());
  for (const Point2& p : vertices) {
    if (v.empty() || !(v.back() == p)) v.push_back(p);
  }
  while (v.size() > 1 && v.front() == v.back()) v.pop_back();
  if (v.size() < 3) {
    throw GeometryError("polygon needs at least 3 distinct vertices, got " +
                        std::to_string(v.size()));
  }
  const double area = signed_area(v);
  if (area == 0.0 || !std::isfinite(area)) {
    throw GeometryError("polygon has zero area");
  }
  if (!is_simple(v)) throw GeometryError("polygon is self-intersecting");
  if (area < 0.0) {
    std::reverse(v.begin(), v.end());
    reversed_ = true;
  }
  vertices_ = std::move(v);
}

std::vector<Point2> RotatedRect::corners() const {
  const double rad = angle * kPi / 180.0;
  const Point2 u{std::cos(rad), std::sin(rad)};
  const Point2 v{-u.y, u.x};
  const double hw = width / 2.0;
  const double hh = height / 2.0;
  return {center - hw * u - hh * v, center + hw * u - hh * v,
          center + hw * u + hh * v, center - hw * u + hh * v};
}

Polygon RotatedRect::to_polygon() const { return Polygon(corners()); }

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
}

double signed_area(std::span<const Point2> pts) {
  const std::size_t n = pts.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += cross(pts[i], pts[(i + 1) % n]);
  }
  return 0.5 * acc;
}

double polygon_area(const Polygon& p) {
  return std::abs(signed_area(p.vertices()));
}

AxisRect axis_aligned_bbox(const Polygon& p) { return bbox_of(p.vertices()); }

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point2& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i > 0; --i) {
    const Point2 p = pts[i - 1];
    while (k >= lower && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

RotatedRect min_area_rect(std::span<const Point2> pts) {
  const std::vector<Point2> h = convex_hull({pts.begin(), pts.end()});
  const std::size_t n = h.size();
  if (n < 3) throw GeometryError("min_area_rect needs a non-degenerate point set");

  auto along = [&](Point2 e, std::size_t k) { return dot(e, h[k % n]); };

  std::size_t right = 0;
  std::size_t top = 0;
  std::size_t left = 0;
  double best = std::numeric_limits<double>::infinity();
  RotatedRect result;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 d = h[(i + 1) % n] - h[i];
    const double len = std::hypot(d.x, d.y);
    const Point2 e{d.x / len, d.y / len};
    const Point2 nrm{-e.y, e.x};  // inward for a CCW hull
    if (i == 0) {
      right = top = 1;
    }
    for (std::size_t step = 0; step < n && along(e, right + 1) >= along(e, right); ++step) ++right;
    if (top < right) top = right;
    for (std::size_t step = 0; step < n && along(nrm, top + 1) >= along(nrm, top); ++step) ++top;
    if (left < top) left = top;
    for (std::size_t step = 0; step < n && along(e, left + 1) <= along(e, left); ++step) ++left;

    const double e_lo = dot(e, h[left % n] - h[i]);
    const double e_hi = dot(e, h[right % n] - h[i]);
    const double width = e_hi - e_lo;
    const double height = dot(nrm, h[top % n] - h[i]);
    const double area = width * height;
    if (area < best * (1.0 - 1e-12)) {
      best = area;
      const Point2 c = h[i] + (0.5 * (e_lo + e_hi)) * e + (0.5 * height) * nrm;
      double ang = std::atan2(e.y, e.x) * 180.0 / kPi;
      double w = width;
      double hh = height;
      if (w < hh) {
        std::swap(w, hh);
        ang += 90.0;
      }
      result = RotatedRect{c, w, hh, normalize_angle(ang)};
    }
  }
  return result;
}

RotatedRect min_area_rect(const Polygon& p) { return min_area_rect(p.vertices()); }

bool contains(const Polygon& p, Point2 q) {
  const auto& v = p.vertices();
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    const Point2 a = v[i];
    const Point2 b = v[j];
    if ((a.y <= q.y) != (b.y <= q.y)) {
      const double x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (q.x < x) inside = !inside;
    }
  }
  return inside;
}

double intersection_area(const Polygon& a, const Polygon& b) {
  if (!boxes_overlap(axis_aligned_bbox(a), axis_aligned_bbox(b))) return 0.0;
  const auto fa = fan(a);
  const auto fb = fan(b);
  double total = 0.0;
  for (const auto& ta : fa) {
    for (const auto& tb : fb) {
      if (!boxes_overlap(ta.box, tb.box)) continue;
      total += ta.sign * tb.sign * triangle_overlap(ta.tri, tb.tri);
    }
  }
  return std::max(0.0, total);
}

double polygon_iou(const Polygon& a, const Polygon& b) {
  if (a.vertices() == b.vertices()) return 1.0;
  // Fixed argument order keeps the floating-point result symmetric.
  const bool swap = lexicographically_less(b, a);
  const Polygon& first = swap ? b : a;
  const Polygon& second = swap ? a : b;
  const double inter = intersection_area(first, second);
  if (inter <= 0.0) return 0.0;
  const double uni = polygon_area(first) + polygon_area(second) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> polygon_nms(std::span<const ScoredPolygon> instances,
                                     double iou_threshold) {
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return instances[i].score > instances[j].score;
  });
  std::vector<AxisRect> boxes;
  boxes.reserve(instances.size());
  for (const auto& inst : instances) boxes.push_back(axis_aligned_bbox(inst.polygon));

  std::vector<std::size_t> kept;
  for (const std::size_t idx : order) {
    bool suppressed = false;
    for (const std::size_t k : kept) {
      if (!boxes_overlap(boxes[idx], boxes[k])) continue;
      if (polygon_iou(instances[idx].polygon, instances[k].polygon) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

BinaryMask rasterize(const Polygon& p, int height, int width) {
  if (height < 1 || width < 1) {
    throw GeometryError("rasterize needs a frame of at least 1x1");
  }
  BinaryMask mask(height, width);
  const auto& v = p.vertices();
  const AxisRect box = axis_aligned_bbox(p);
  const int row_lo = std::max(0, static_cast<int>(std::floor(box.y_min - 0.5)));
  const int row_hi = std::min(height - 1, static_cast<int>(std::ceil(box.y_max - 0.5)));
  std::vector<double> xs;
  for (int i = row_lo; i <= row_hi; ++i) {
    const double yc = i + 0.5;
    xs.clear();
    for (std::size_t k = 0, j = v.size() - 1; k < v.size(); j = k++) {
      const Point2 a = v[k];
      const Point2 b = v[j];
      if ((a.y <= yc) != (b.y <= yc)) {
        xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // Centers strictly left of a crossing flip parity, matching contains().
      const double lo = std::ceil(xs[k] - 0.5);
      const double hi = std::ceil(xs[k + 1] - 0.5);
      const int j0 = static_cast<int>(std::max(0.0, lo));
      const int j1 = static_cast<int>(std::min<double>(width, hi));
      for (int j = j0; j < j1; ++j) mask.at(i, j) = 1;
    }
  }
  return mask;
}

BinaryMask largest_component(const BinaryMask& mask) {
  const int h = mask.height;
  const int w = mask.width;
  std::vector<int> label(mask.bits.size(), -1);
  std::vector<int> stack;
  int best_label = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t s = std::size_t(y) * w + x;
      if (!mask.bits[s] || label[s] >= 0) continue;
      std::size_t size = 0;
      stack.assign(1, static_cast<int>(s));
      label[s] = next;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        ++size;
        const int cy = cur / w;
        const int cx = cur % w;
        const int nb[4][2] = {{cy - 1, cx}, {cy + 1, cx}, {cy, cx - 1}, {cy, cx + 1}};
        for (const auto& q : nb) {
          if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
          const std::size_t t = std::size_t(q[0]) * w + q[1];
          if (mask.bits[t] && label[t] < 0) {
            label[t] = next;
            stack.push_back(static_cast<int>(t));
          }
        }
      }
      if (size > best_size) {
        best_size = size;
        best_label = next;
      }
      ++next;
    }
  }
  BinaryMask out(h, w);
  if (best_label < 0) return out;
  for (std::size_t s = 0; s < label.size(); ++s) {
    out.bits[s] = label[s] == best_label ? 1 : 0;
  }
  return out;
}

RotatedRect mask_min_area_rect(const BinaryMask& mask) {
  std::vector<Point2> corners;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      const bool interior = y > 0 && x > 0 && y + 1 < mask.height &&
                            x + 1 < mask.width && mask.at(y - 1, x) &&
                            mask.at(y + 1, x) && mask.at(y, x - 1) &&
                            mask.at(y, x + 1);
      if (interior) continue;
      const double fx = x;
      const double fy = y;
      corners.push_back({fx, fy});
      corners.push_back({fx + 1, fy});
      corners.push_back({fx + 1, fy + 1});
      corners.push_back({fx, fy + 1});
    }
  }
  if (corners.empty()) throw GeometryError("mask_min_area_rect on an empty mask");
  return min_area_rect(corners);
}

}  // namespace ctxdet
