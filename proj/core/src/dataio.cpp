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

#include "ctxdet/dataio.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace ctxdet {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

// ---------------------------------------------------------------------------
// Procedural rendering.

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}
bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

struct Color {
  double r = 0, g = 0, b = 0;
  double luma() const { return 0.299 * r + 0.587 * g + 0.114 * b; }
};

struct Canvas {
  int h, w;
  std::vector<double> px;  // rgb

  Canvas(int hh, int ww) : h(hh), w(ww), px(std::size_t(hh) * ww * 3, 0.0) {}
  void blend(int y, int x, const Color& c, double a) {
    if (y < 0 || y >= h || x < 0 || x >= w || a <= 0.0) return;
    a = std::min(a, 1.0);
    double* p = &px[(std::size_t(y) * w + x) * 3];
    p[0] = p[0] * (1 - a) + c.r * a;
    p[1] = p[1] * (1 - a) + c.g * a;
    p[2] = p[2] * (1 - a) + c.b * a;
  }
  Color get(int y, int x) const {
    const double* p = &px[(std::size_t(y) * w + x) * 3];
    return {p[0], p[1], p[2]};
  }
};

struct Segment {
  Point2 a, b;
};
struct Ring {
  Point2 c;
  double r;
};

// Strokes in a local (u, v) frame.
struct StrokeSet {
  std::vector<Segment> segments;
  std::vector<Ring> rings;
  double thickness = 1.5;

  double distance(Point2 q) const {
    double best = 1e30;
    for (const auto& s : segments) {
      const Point2 d = s.b - s.a;
      const double len2 = dot(d, d);
      double t = len2 > 0 ? dot(q - s.a, d) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const Point2 p = s.a + t * d;
      best = std::min(best, std::hypot(q.x - p.x, q.y - p.y));
    }
    for (const auto& r : rings) {
      best = std::min(best, std::abs(std::hypot(q.x - r.c.x, q.y - r.c.y) - r.r));
    }
    return best;
  }
};

// Maps between image points and a local (u along, v across) frame.
struct Frame {
  enum class Kind { kStraight, kArc } kind = Kind::kStraight;
  Point2 origin;        // straight: image position of (0, 0)
  Point2 along{1, 0};   // straight: unit u direction
  Point2 center;        // arc: circle center
  double radius = 0;    // arc: radius of the v = 0 edge
  double phi0 = 0;      // arc: angle of u = 0
  double mid_radius = 1;
  double side = 1;      // arc: +1 when v grows away from the center

  Point2 to_image(double u, double v) const {
    if (kind == Kind::kStraight) {
      const Point2 across{-along.y, along.x};
      return origin + u * along + v * across;
    }
    const double phi = phi0 - u / mid_radius;
    const double r = radius + side * v;
    return {center.x + r * std::cos(phi), center.y + r * std::sin(phi)};
  }

  Point2 to_local(Point2 p) const {
    if (kind == Kind::kStraight) {
      const Point2 across{-along.y, along.x};
      const Point2 d = p - origin;
      return {dot(d, along), dot(d, across)};
    }
    const Point2 d = p - center;
    double dphi = phi0 - std::atan2(d.y, d.x);
    while (dphi > kPi) dphi -= 2 * kPi;
    while (dphi < -kPi) dphi += 2 * kPi;
    return {dphi * mid_radius, side * (std::hypot(d.x, d.y) - radius)};
  }
};

// Outline of the local box [u0,u1]x[v0,v1] with `samples` points per long side.
std::vector<Point2> outline(const Frame& f, double u0, double u1, double v0, double v1,
                            int samples) {
  std::vector<Point2> pts;
  for (int i = 0; i < samples; ++i) {
    const double u = u0 + (u1 - u0) * i / (samples - 1);
    pts.push_back(f.to_image(u, v0));
  }
  for (int i = samples - 1; i >= 0; --i) {
    const double u = u0 + (u1 - u0) * i / (samples - 1);
    pts.push_back(f.to_image(u, v1));
  }
  return pts;
}

void paint_strokes(Canvas& canvas, const Frame& frame, const StrokeSet& strokes,
                   const std::vector<Point2>& region, const Color& color) {
  AxisRect box{region[0].x, region[0].y, region[0].x, region[0].y};
  for (const auto& p : region) {
    box.x_min = std::min(box.x_min, p.x);
    box.y_min = std::min(box.y_min, p.y);
    box.x_max = std::max(box.x_max, p.x);
    box.y_max = std::max(box.y_max, p.y);
  }
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min)) - 1);
  const int y1 = std::min(canvas.h - 1, static_cast<int>(std::ceil(box.y_max)) + 1);
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min)) - 1);
  const int x1 = std::min(canvas.w - 1, static_cast<int>(std::ceil(box.x_max)) + 1);
  const double half = strokes.thickness / 2.0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Point2 local = frame.to_local({x + 0.5, y + 0.5});
      const double d = strokes.distance(local);
      canvas.blend(y, x, color, half + 0.5 - d);
    }
  }
}

// Glyph-like strokes inside the cell [u0, u0 + gw] x [top, top + gh].
void add_glyph(Rng& rng, StrokeSet& s, double u0, double gw, double top, double gh) {
  std::array<Point2, 9> anchors;
  for (int i = 0; i < 9; ++i) {
    anchors[i] = {u0 + gw * (i % 3) / 2.0, top + gh * (i / 3) / 2.0};
  }
  const double kind = uniform(rng, 0.0, 1.0);
  if (kind < 0.12) {
    s.rings.push_back({{u0 + gw / 2, top + gh / 2}, std::min(gw, gh) / 2});
    return;
  }
  if (kind < 0.2) {
    s.segments.push_back({anchors[1], anchors[7]});
    return;
  }
  const int strokes = uniform_int(rng, 2, 4);
  for (int k = 0; k < strokes; ++k) {
    int a = uniform_int(rng, 0, 8);
    int b = uniform_int(rng, 0, 8);
    if (a == b) b = (a + 4) % 9;
    s.segments.push_back({anchors[a], anchors[b]});
  }
}

Color random_color(Rng& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

// Ink that contrasts with the surface it is drawn on.
Color ink_for(Rng& rng, const Color& surface) {
  if (surface.luma() > 128.0) return random_color(rng, 0.0, 55.0);
  return random_color(rng, 200.0, 255.0);
}

bool inside_frame(const std::vector<Point2>& pts, int h, int w, double margin) {
  for (const auto& p : pts) {
    if (p.x < margin || p.y < margin || p.x > w - margin || p.y > h - margin) return false;
  }
  return true;
}

AxisRect bbox_points(const std::vector<Point2>& pts) {
  AxisRect r{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const auto& p : pts) {
    r.x_min = std::min(r.x_min, p.x);
    r.y_min = std::min(r.y_min, p.y);
    r.x_max = std::max(r.x_max, p.x);
    r.y_max = std::max(r.y_max, p.y);
  }
  return r;
}

bool overlaps_any(const AxisRect& r, const std::vector<AxisRect>& taken, double pad) {
  for (const auto& t : taken) {
    if (r.x_min - pad < t.x_max && t.x_min < r.x_max + pad && r.y_min - pad < t.y_max &&
        t.y_min < r.y_max + pad) {
      return true;
    }
  }
  return false;
}

Frame straight_frame(Point2 center, double length, double height, double angle_deg) {
  Frame f;
  const double a = angle_deg * kPi / 180.0;
  f.along = {std::cos(a), std::sin(a)};
  const Point2 across{-f.along.y, f.along.x};
  f.origin = center - (length / 2) * f.along - (height / 2) * across;
  return f;
}

Color surface_color(const Canvas& canvas, const AxisRect& r) {
  const int y = std::clamp(static_cast<int>((r.y_min + r.y_max) / 2), 0, canvas.h - 1);
  const int x = std::clamp(static_cast<int>((r.x_min + r.x_max) / 2), 0, canvas.w - 1);
  return canvas.get(y, x);
}

void paint_background(Rng& rng, Canvas& canvas) {
  const Color base = random_color(rng, 60.0, 200.0);
  const Color tint = random_color(rng, -40.0, 40.0);
  const double gx = uniform(rng, -1.0, 1.0);
  const double gy = uniform(rng, -1.0, 1.0);
  for (int y = 0; y < canvas.h; ++y) {
    for (int x = 0; x < canvas.w; ++x) {
      const double t = (gx * x / canvas.w + gy * y / canvas.h) * 0.5;
      double* p = &canvas.px[(std::size_t(y) * canvas.w + x) * 3];
      p[0] = base.r + tint.r * t;
      p[1] = base.g + tint.g * t;
      p[2] = base.b + tint.b * t;
    }
  }
  const int blobs = uniform_int(rng, 1, 4);
  for (int i = 0; i < blobs; ++i) {
    const Color c = random_color(rng, 40.0, 220.0);
    const double cx = uniform(rng, 0, canvas.w);
    const double cy = uniform(rng, 0, canvas.h);
    const double sigma = uniform(rng, 0.1, 0.35) * std::min(canvas.w, canvas.h);
    const double strength = uniform(rng, 0.2, 0.6);
    for (int y = 0; y < canvas.h; ++y) {
      for (int x = 0; x < canvas.w; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        canvas.blend(y, x, c, strength * std::exp(-d2 / (2 * sigma * sigma)));
      }
    }
  }
  const int lines = uniform_int(rng, 0, 2);
  for (int i = 0; i < lines; ++i) {
    StrokeSet s;
    s.thickness = uniform(rng, 1.0, 2.5);
    s.segments.push_back({{uniform(rng, 0, canvas.w), uniform(rng, 0, canvas.h)},
                          {uniform(rng, 0, canvas.w), uniform(rng, 0, canvas.h)}});
    Frame identity;
    const std::vector<Point2> all{{0, 0}, {double(canvas.w), 0},
                                  {double(canvas.w), double(canvas.h)}, {0, double(canvas.h)}};
    paint_strokes(canvas, identity, s, all, random_color(rng, 30.0, 230.0));
  }
}

std::string random_word(Rng& rng, int letters) {
  std::string w;
  for (int i = 0; i < letters; ++i) w.push_back(static_cast<char>('a' + uniform_int(rng, 0, 25)));
  return w;
}

struct PlacedText {
  std::vector<Point2> polygon;
  Frame frame;
  StrokeSet strokes;
  double length;
  double height;
};

// Samples a word layout; returns false when it does not fit the frame.
bool layout_word(Rng& rng, const SceneSpec& spec, double scale_down, PlacedText& out) {
  const double h = uniform(rng, spec.text_height.min, spec.text_height.max) * scale_down;
  int glyphs = uniform_int(rng, spec.glyphs_per_word.min, spec.glyphs_per_word.max);
  const double gw = h * uniform(rng, 0.5, 0.75);
  const double pitch = gw * uniform(rng, 1.2, 1.45);
  const double max_len = std::min(spec.width, spec.height) * 0.85;
  glyphs = std::max(1, std::min(glyphs, static_cast<int>(max_len / pitch)));
  const double length = glyphs * pitch;
  const double pad = std::max(1.0, 0.12 * h);

  const double kind = uniform(rng, 0.0, 1.0);
  Frame f;
  std::vector<Point2> poly;
  if (kind < spec.curved_fraction && glyphs >= 3) {
    f.kind = Frame::Kind::kArc;
    const double radius = length * uniform(rng, 1.1, 2.2);
    f.side = coin(rng, 0.5) ? 1.0 : -1.0;
    f.radius = radius;
    f.mid_radius = radius + f.side * h / 2;
    const double mid_angle = (f.side > 0 ? kPi / 2 : -kPi / 2) + uniform(rng, -0.4, 0.4);
    f.phi0 = mid_angle + (length / 2) / f.mid_radius;
    const Point2 mid{uniform(rng, 0, spec.width), uniform(rng, 0, spec.height)};
    f.center = {mid.x - f.mid_radius * std::cos(mid_angle), mid.y - f.mid_radius * std::sin(mid_angle)};
    poly = outline(f, -pad, length + pad, -pad, h + pad, 5);
  } else {
    double angle = 0.0;
    if (kind < spec.curved_fraction + spec.rotated_fraction) {
      angle = uniform(rng, -spec.max_rotation_deg, spec.max_rotation_deg);
    }
    const Point2 c{uniform(rng, 0, spec.width), uniform(rng, 0, spec.height)};
    f = straight_frame(c, length, h, angle);
    poly = outline(f, -pad, length + pad, -pad, h + pad, 2);
  }
  if (!inside_frame(poly, spec.height, spec.width, 1.0)) return false;

  StrokeSet strokes;
  strokes.thickness = std::max(1.0, h * uniform(rng, 0.1, 0.16));
  for (int g = 0; g < glyphs; ++g) {
    add_glyph(rng, strokes, g * pitch + (pitch - gw) / 2, gw, 0.08 * h, 0.84 * h);
  }
  out = PlacedText{std::move(poly), f, std::move(strokes), length, h};
  return true;
}

// Periodic bars with optional rails: locally glyph-like, globally a fence.
void paint_fence(Rng& rng, Canvas& canvas, const SceneSpec& spec,
                 std::vector<AxisRect>& taken) {
  for (int attempt = 0; attempt < 40; ++attempt) {
    const double bar_h = uniform(rng, spec.text_height.min, spec.text_height.max * 2.0);
    const double period = bar_h * uniform(rng, 0.3, 0.55);
    const int bars = uniform_int(rng, 5, 10);
    const double length = bars * period;
    const double angle = coin(rng, 0.7) ? uniform(rng, -10, 10) : uniform(rng, -45, 45);
    const Point2 c{uniform(rng, 0, spec.width), uniform(rng, 0, spec.height)};
    const Frame f = straight_frame(c, length, bar_h, angle);
    const std::vector<Point2> region = outline(f, -2, length + 2, -2, bar_h + 2, 2);
    if (!inside_frame(region, spec.height, spec.width, 0.0)) continue;
    const AxisRect box = bbox_points(region);
    if (overlaps_any(box, taken, 2.0)) continue;
    StrokeSet s;
    s.thickness = std::max(1.0, bar_h * uniform(rng, 0.06, 0.1));
    for (int b = 0; b < bars; ++b) {
      const double u = (b + 0.5) * period;
      s.segments.push_back({{u, 0.0}, {u, bar_h}});
    }
    if (coin(rng, 0.6)) {
      s.segments.push_back({{0.0, bar_h * 0.2}, {length, bar_h * 0.2}});
      s.segments.push_back({{0.0, bar_h * 0.8}, {length, bar_h * 0.8}});
    }
    paint_strokes(canvas, f, s, region, ink_for(rng, surface_color(canvas, box)));
    taken.push_back(box);
    return;
  }
}

// A flat "table" carrying a row of ringed discs ("OOO" at RoI scale).
void paint_discs(Rng& rng, Canvas& canvas, const SceneSpec& spec,
                 std::vector<AxisRect>& taken) {
  for (int attempt = 0; attempt < 40; ++attempt) {
    const double r = uniform(rng, spec.text_height.min * 0.45, spec.text_height.max * 0.7);
    const int discs = uniform_int(rng, 2, 4);
    const double gap = r * uniform(rng, 2.2, 2.8);
    const double length = discs * gap;
    const double depth = 2 * r + uniform(rng, 4.0, 10.0);
    const Point2 c{uniform(rng, 0, spec.width), uniform(rng, 0, spec.height)};
    const Frame f = straight_frame(c, length + 6, depth, 0.0);
    const std::vector<Point2> region = outline(f, 0, length + 6, 0, depth, 2);
    if (!inside_frame(region, spec.height, spec.width, 0.0)) continue;
    const AxisRect box = bbox_points(region);
    if (overlaps_any(box, taken, 2.0)) continue;
    const Color table = random_color(rng, 50.0, 210.0);
    for (int y = std::max(0, int(box.y_min)); y < std::min(canvas.h, int(box.y_max)); ++y) {
      for (int x = std::max(0, int(box.x_min)); x < std::min(canvas.w, int(box.x_max)); ++x) {
        canvas.blend(y, x, table, 1.0);
      }
    }
    StrokeSet s;
    s.thickness = std::max(1.0, r * uniform(rng, 0.25, 0.35));
    for (int d = 0; d < discs; ++d) {
      const Point2 dc{3 + (d + 0.5) * gap, depth / 2};
      s.rings.push_back({dc, r});
      if (coin(rng, 0.5)) s.rings.push_back({dc, r * 0.45});
    }
    paint_strokes(canvas, f, s, region, ink_for(rng, table));
    taken.push_back(box);
    return;
  }
}

}  // namespace

Annotation parse_annotation_line(std::string_view line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
    line.remove_prefix(3);
  }
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);

  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (fields.size() < 9) {
    throw ParseError(where + "expected >=9 fields, got " + std::to_string(fields.size()));
  }
  std::vector<double> numbers;
  for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
    double v = 0.0;
    if (!parse_number(fields[i], v)) break;
    numbers.push_back(v);
  }
  if (numbers.size() < 8) {
    throw ParseError(where + "non-numeric coordinate in field " +
                     std::to_string(numbers.size() + 1) + " ('" +
                     std::string(trim(fields[numbers.size()])) + "')");
  }
  numbers.resize(numbers.size() / 2 * 2);
  std::vector<Point2> pts;
  for (std::size_t i = 0; i < numbers.size(); i += 2) pts.push_back({numbers[i], numbers[i + 1]});

  std::string transcription;
  for (std::size_t i = numbers.size(); i < fields.size(); ++i) {
    if (i > numbers.size()) transcription.push_back(',');
    transcription.append(fields[i]);
  }
  try {
    Annotation a{Polygon(std::move(pts)), transcription, transcription == kIgnoreSentinel};
    return a;
  } catch (const GeometryError& e) {
    throw ParseError(where + "degenerate polygon: " + e.what());
  }
}

std::string format_annotation_line(const Annotation& a) {
  std::string out;
  for (const Point2& p : a.polygon.vertices()) {
    out += fmt2(p.x);
    out += ',';
    out += fmt2(p.y);
    out += ',';
  }
  out += a.ignore ? std::string(kIgnoreSentinel) : a.transcription;
  return out;
}

std::vector<Annotation> read_annotation_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file '" + path.string() + "'");
  std::vector<Annotation> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_annotation_line(line, n));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_annotation_file(const std::vector<Annotation>& annotations,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& a : annotations) out << format_annotation_line(a) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

GroundTruth make_ground_truth(const std::vector<Annotation>& annotations, int height, int width) {
  GroundTruth gt;
  gt.global_map = BinaryMask(height, width);
  gt.ignore_map = BinaryMask(height, width);
  for (const auto& a : annotations) {
    BinaryMask mask = rasterize(a.polygon, height, width);
    if (a.ignore) {
      gt.ignore_regions.push_back(a.polygon);
      for (std::size_t i = 0; i < mask.bits.size(); ++i) gt.ignore_map.bits[i] |= mask.bits[i];
      continue;
    }
    AxisRect box = axis_aligned_bbox(a.polygon);
    box.x_min = std::clamp(box.x_min, 0.0, double(width));
    box.x_max = std::clamp(box.x_max, 0.0, double(width));
    box.y_min = std::clamp(box.y_min, 0.0, double(height));
    box.y_max = std::clamp(box.y_max, 0.0, double(height));
    if (!box.valid()) continue;  // entirely outside the frame
    for (std::size_t i = 0; i < mask.bits.size(); ++i) gt.global_map.bits[i] |= mask.bits[i];
    gt.instances.push_back({a.polygon, box, std::move(mask)});
  }
  return gt;
}

void SceneSpec::validate() const {
  auto range_ok = [](IntRange r) { return r.min >= 0 && r.min <= r.max; };
  if (height < 16 || width < 16) throw std::invalid_argument("scene: height/width must be >= 16");
  if (!range_ok(text_count)) throw std::invalid_argument("scene: text_count range is empty");
  if (!range_ok(text_height) || text_height.min < 4) {
    throw std::invalid_argument("scene: text_height range must be within [4, inf)");
  }
  if (!range_ok(glyphs_per_word) || glyphs_per_word.min < 1) {
    throw std::invalid_argument("scene: glyphs_per_word range must be within [1, inf)");
  }
  if (!range_ok(fence_banks)) throw std::invalid_argument("scene: fence_banks range is empty");
  if (!range_ok(disc_clusters)) throw std::invalid_argument("scene: disc_clusters range is empty");
  if (rotated_fraction < 0 || curved_fraction < 0 || rotated_fraction + curved_fraction > 1) {
    throw std::invalid_argument("scene: rotated/curved fractions must be >= 0 and sum to <= 1");
  }
  if (ignore_fraction < 0 || ignore_fraction > 1) {
    throw std::invalid_argument("scene: ignore_fraction must lie in [0, 1]");
  }
  if (noise_sigma < 0) throw std::invalid_argument("scene: noise_sigma must be >= 0");
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Canvas canvas(spec.height, spec.width);
  paint_background(rng, canvas);

  const int words = uniform_int(rng, spec.text_count.min, spec.text_count.max);
  std::vector<PlacedText> placed;
  std::vector<AxisRect> taken;
  for (int i = 0; i < words; ++i) {
    PlacedText t;
    bool ok = false;
    for (int attempt = 0; attempt < 400 && !ok; ++attempt) {
      // Shrink progressively so crowded frames still receive every word.
      const double shrink = attempt < 100 ? 1.0 : std::max(0.35, 1.0 - 0.0025 * attempt);
      if (!layout_word(rng, spec, shrink, t)) continue;
      ok = attempt >= 300 || !overlaps_any(bbox_points(t.polygon), taken, 2.0);
    }
    if (!ok) {
      // Last resort: a small horizontal word in the frame center.
      const double h = std::max(4.0, std::min(spec.height, spec.width) * 0.1);
      const double len = std::min(spec.width * 0.5, 3 * h);
      t.frame = straight_frame({spec.width / 2.0, spec.height / 2.0}, len, h, 0.0);
      t.polygon = outline(t.frame, -1, len + 1, -1, h + 1, 2);
      t.strokes = StrokeSet{};
      t.strokes.thickness = std::max(1.0, 0.12 * h);
      t.length = len;
      t.height = h;
      for (int g = 0; g < 3; ++g) add_glyph(rng, t.strokes, g * len / 3, len / 4, 0.1 * h, 0.8 * h);
    }
    taken.push_back(bbox_points(t.polygon));
    placed.push_back(std::move(t));
  }

  const int fences = uniform_int(rng, spec.fence_banks.min, spec.fence_banks.max);
  for (int i = 0; i < fences; ++i) paint_fence(rng, canvas, spec, taken);
  const int clusters = uniform_int(rng, spec.disc_clusters.min, spec.disc_clusters.max);
  for (int i = 0; i < clusters; ++i) paint_discs(rng, canvas, spec, taken);

  Scene scene;
  for (const auto& t : placed) {
    const Color ink = ink_for(rng, surface_color(canvas, bbox_points(t.polygon)));
    paint_strokes(canvas, t.frame, t.strokes, t.polygon, ink);
    const int letters = static_cast<int>(t.strokes.segments.size() + t.strokes.rings.size());
    const bool ignore = coin(rng, spec.ignore_fraction);
    std::string word = random_word(rng, std::clamp(letters / 2, 1, 12));
    scene.annotations.push_back(
        Annotation{Polygon(t.polygon), ignore ? std::string(kIgnoreSentinel) : word, ignore});
  }

  std::normal_distribution<double> noise(0.0, std::max(spec.noise_sigma, 1e-9));
  scene.image = Image(spec.height, spec.width);
  for (std::size_t i = 0; i < canvas.px.size(); ++i) {
    const double v = canvas.px[i] + (spec.noise_sigma > 0 ? noise(rng) : 0.0);
    scene.image.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return scene;
}

Manifest write_dataset(const std::vector<SceneSpec>& specs, const std::filesystem::path& directory) {
  Manifest manifest;
  if (specs.empty()) return manifest;
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create directory '" + directory.string() + "': " + ec.message());
  manifest.path = directory / "manifest.tsv";
  std::ostringstream lines;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "img_%06zu", i);
    const Scene scene = generate_scene(specs[i]);
    const std::filesystem::path img = std::string(stem) + ".ppm";
    const std::filesystem::path ann = std::string(stem) + ".txt";
    write_ppm(scene.image, directory / img);
    write_annotation_file(scene.annotations, directory / ann);
    manifest.entries.push_back({img, ann});
    lines << img.string() << '\t' << ann.string() << '\n';
  }
  std::ofstream out(manifest.path);
  if (!out) throw IoError("cannot open '" + manifest.path.string() + "' for writing");
  out << lines.str();
  if (!out) throw IoError("failed writing '" + manifest.path.string() + "'");
  return manifest;
}

Manifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
  Manifest m;
  m.path = manifest_path;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(manifest_path.string() + ": line " + std::to_string(n) +
                       ": expected 'image<TAB>annotation'");
    }
    m.entries.push_back({std::string(trim(std::string_view(line).substr(0, tab))),
                         std::string(trim(std::string_view(line).substr(tab + 1)))});
  }
  return m;
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  std::vector<Sample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    const auto img = e.image.is_absolute() ? e.image : base / e.image;
    const auto ann = e.annotation.is_absolute() ? e.annotation : base / e.annotation;
    out.push_back({e.image.stem().string(), read_ppm(img), read_annotation_file(ann)});
  }
  return out;
}

std::vector<SceneSpec> make_scene_specs(const SceneSpec& base, std::size_t count,
                                        std::uint64_t base_seed, int min_side, int max_side) {
  if (min_side > max_side || min_side < 16) {
    throw std::invalid_argument("make_scene_specs: side range must be non-empty and >= 16");
  }
  std::vector<SceneSpec> specs;
  specs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec s = base;
    s.seed = base_seed + i;
    Rng rng(s.seed ^ 0x5DEECE66DULL);
    s.height = uniform_int(rng, min_side, max_side);
    s.width = uniform_int(rng, min_side, max_side);
    specs.push_back(s);
  }
  return specs;
}

}  // namespace ctxdet
