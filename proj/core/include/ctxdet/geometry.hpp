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

#ifndef CTXDET_GEOMETRY_HPP_
#define CTXDET_GEOMETRY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace ctxdet {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }

/// Horizontal box in pixel coordinates.
struct AxisRect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool operator==(const AxisRect&) const = default;

  /// Checked construction; throws GeometryError unless min < max on both axes.
  static AxisRect checked(double x0, double y0, double x1, double y1);
};

/// Intersection-over-union of two horizontal boxes (0 when either is empty).
double box_iou(const AxisRect& a, const AxisRect& b);

/// Simple polygon stored counter-clockwise (y axis pointing down is treated as
/// a plain Cartesian frame; "counter-clockwise" means positive shoelace area).
class Polygon {
 public:
  /// Validates and normalizes. Rejects fewer than 3 vertices, non-finite
  /// coordinates, zero area and self-intersection.
  explicit Polygon(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  const Point2& operator[](std::size_t i) const { return vertices_[i]; }

  /// True when the constructor reversed the input order.
  bool was_reversed() const { return reversed_; }

 private:
  std::vector<Point2> vertices_;
  bool reversed_ = false;
};

/// Oriented rectangle. width >= height > 0, angle in degrees in [-90, 90);
/// the angle is the direction of the width side measured from +x.
struct RotatedRect {
  Point2 center;
  double width = 0.0;
  double height = 0.0;
  double angle = 0.0;

  double area() const { return width * height; }
  std::vector<Point2> corners() const;
  Polygon to_polygon() const;
};

/// Binary raster, row-major, one byte per pixel (0 or 1).
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), bits(std::size_t(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return bits[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const {
    return bits[std::size_t(y) * width + x];
  }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

double signed_area(std::span<const Point2> pts);
double polygon_area(const Polygon& p);
AxisRect axis_aligned_bbox(const Polygon& p);

/// Andrew's monotone chain; returns the hull counter-clockwise without
/// collinear points. Fewer than 3 distinct points yield a degenerate hull.
std::vector<Point2> convex_hull(std::vector<Point2> pts);

/// Minimum-area enclosing rectangle by rotating calipers over the hull.
/// Among equal-area candidates the first hull edge in hull order wins.
RotatedRect min_area_rect(std::span<const Point2> pts);
RotatedRect min_area_rect(const Polygon& p);

/// Even-odd point containment.
bool contains(const Polygon& p, Point2 q);

/// Exact |a ∩ b| for simple (possibly concave) polygons.
double intersection_area(const Polygon& a, const Polygon& b);
double polygon_iou(const Polygon& a, const Polygon& b);

struct ScoredPolygon {
  Polygon polygon;
  double score = 0.0;
};

/// Greedy polygon NMS. Returns kept input indices in descending score order
/// (ties resolved by lower index). A candidate is dropped iff its IoU with an
/// already kept polygon exceeds the threshold.
std::vector<std::size_t> polygon_nms(std::span<const ScoredPolygon> instances,
                                     double iou_threshold);

/// Pixel (i, j) is set iff (j + 0.5, i + 0.5) lies inside p (even-odd rule).
BinaryMask rasterize(const Polygon& p, int height, int width);

/// Largest 4-connected component (ties: the one met first in raster order).
BinaryMask largest_component(const BinaryMask& mask);

/// Minimum-area rectangle enclosing every set pixel's unit square.
RotatedRect mask_min_area_rect(const BinaryMask& mask);

}  // namespace ctxdet

#endif  // CTXDET_GEOMETRY_HPP_
