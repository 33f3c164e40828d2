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

#include "ctxdet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>

namespace ctxdet {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Mask logits of one RoI resized to the box and thresholded in image space.
BinaryMask paste_mask(const FeatureMap& logits, int r, const AxisRect& box, int height, int width,
                      double threshold) {
  BinaryMask out(height, width);
  const int m = logits.h();
  const float* plane = logits.plane(r, 0);
  auto cell = [&](int gy, int gx) {
    gy = std::clamp(gy, 0, m - 1);
    gx = std::clamp(gx, 0, m - 1);
    return sigmoid(plane[std::size_t(gy) * m + gx]);
  };
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min)));
  const int x1 = std::min(width, static_cast<int>(std::ceil(box.x_max)));
  const int y1 = std::min(height, static_cast<int>(std::ceil(box.y_max)));
  for (int y = y0; y < y1; ++y) {
    const double py = y + 0.5;
    if (py < box.y_min || py > box.y_max) continue;
    const double gy = (py - box.y_min) / box.height() * m - 0.5;
    const int iy = static_cast<int>(std::floor(gy));
    const double fy = gy - iy;
    for (int x = x0; x < x1; ++x) {
      const double px = x + 0.5;
      if (px < box.x_min || px > box.x_max) continue;
      const double gx = (px - box.x_min) / box.width() * m - 0.5;
      const int ix = static_cast<int>(std::floor(gx));
      const double fx = gx - ix;
      const double p = (1 - fy) * ((1 - fx) * cell(iy, ix) + fx * cell(iy, ix + 1)) +
                       fy * ((1 - fx) * cell(iy + 1, ix) + fx * cell(iy + 1, ix + 1));
      if (p >= threshold) out.at(y, x) = 1;
    }
  }
  return out;
}

std::vector<Point2> mask_corners(const BinaryMask& mask) {
  std::vector<Point2> pts;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      pts.push_back({double(x), double(y)});
      pts.push_back({double(x + 1), double(y)});
      pts.push_back({double(x), double(y + 1)});
      pts.push_back({double(x + 1), double(y + 1)});
    }
  }
  return pts;
}

/// Vertices clamped into the frame; empty when the result degenerates.
std::optional<Polygon> clamp_polygon(const std::vector<Point2>& in, int height, int width) {
  std::vector<Point2> pts;
  for (const Point2& p : in) {
    pts.push_back({std::clamp(p.x, 0.0, double(width)), std::clamp(p.y, 0.0, double(height))});
  }
  try {
    return Polygon(std::move(pts));
  } catch (const GeometryError&) {
    return std::nullopt;
  }
}

double score_for(const TextInstance& t, RescoreMode mode) {
  return mode == RescoreMode::kOn ? t.fused : t.cs.text;
}

}  // namespace

void InferenceConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("inference: " + what); };
  if (!(score_threshold >= 0 && score_threshold <= 1)) fail("score_threshold must be in [0, 1]");
  if (!(candidate_floor >= 0 && candidate_floor <= 1)) fail("candidate_floor must be in [0, 1]");
  if (!(box_nms_iou > 0 && box_nms_iou <= 1)) fail("box_nms_iou must be in (0, 1]");
  if (detections_per_image < 1) fail("detections_per_image must be >= 1");
  if (!(mask_threshold > 0 && mask_threshold < 1)) fail("mask_threshold must be in (0, 1)");
  if (!(polygon_nms_iou > 0 && polygon_nms_iou <= 1)) fail("polygon_nms_iou must be in (0, 1]");
  if (rpn.pre_nms_top_k < 1 || rpn.post_nms_top_m < 1) fail("rpn top-k/top-m must be >= 1");
}

template <typename T>
double instance_score(const BinaryMask& mask, const Tensor<T>& probabilities) {
  if (probabilities.n() < 1 || probabilities.c() != 2 || probabilities.h() < mask.height ||
      probabilities.w() < mask.width) {
    throw ShapeError("instance_score: map " + probabilities.shape().to_string() +
                     " does not cover a " + std::to_string(mask.height) + "x" +
                     std::to_string(mask.width) + " mask");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      sum += static_cast<double>(probabilities.at(0, kTextChannel, y, x));
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("instance_score: empty mask");
  return sum / static_cast<double>(n);
}

template double instance_score<float>(const BinaryMask&, const Tensor<float>&);
template double instance_score<double>(const BinaryMask&, const Tensor<double>&);

double fused_score(const ScorePair& cs, const ScorePair& is) {
  const double a = cs.text + is.text;
  const double b = cs.background + is.background;
  return 1.0 / (1.0 + std::exp(b - a));
}

std::vector<TextInstance> rescore_toggle(std::vector<TextInstance> instances, RescoreMode mode) {
  for (TextInstance& t : instances) t.score = score_for(t, mode);
  std::stable_sort(instances.begin(), instances.end(),
                   [](const TextInstance& a, const TextInstance& b) { return a.score > b.score; });
  return instances;
}

Candidates detect_candidates(const Detector& model, const Image& image,
                             const InferenceConfig& config) {
  config.validate();
  Candidates out;
  out.height = image.height;
  out.width = image.width;
  const ForwardPass pass = model.forward(image_to_tensor(image, 32));
  if (model.config().tcm) {
    out.seg_probabilities = model.seg_map(pass).probabilities;
    out.has_seg_map = true;
  }

  const std::vector<Proposal> proposals = model.propose(pass, image.height, image.width, config.rpn);
  if (proposals.empty()) return out;
  std::vector<AxisRect> rois;
  for (const Proposal& p : proposals) rois.push_back(p.box);
  const BoxHeadOutput head = model.box_head(pass, rois);

  std::vector<AxisRect> boxes;
  std::vector<double> text_probs;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const double l0 = head.cls_logits.at(int(r), 0, 0, 0);
    const double l1 = head.cls_logits.at(int(r), 1, 0, 0);
    const double p = 1.0 / (1.0 + std::exp(l0 - l1));
    if (p < config.candidate_floor) continue;
    const BoxDeltas d{head.deltas.at(int(r), 0, 0, 0), head.deltas.at(int(r), 1, 0, 0),
                      head.deltas.at(int(r), 2, 0, 0), head.deltas.at(int(r), 3, 0, 0)};
    const AxisRect box = clip_box(decode_box(d, rois[r]), image.height, image.width);
    if (box.width() < 1.0 || box.height() < 1.0) continue;
    boxes.push_back(box);
    text_probs.push_back(p);
  }
  std::vector<std::size_t> keep = box_nms(boxes, text_probs, config.box_nms_iou);
  if (keep.size() > std::size_t(config.detections_per_image)) {
    keep.resize(std::size_t(config.detections_per_image));
  }
  if (keep.empty()) return out;

  std::vector<AxisRect> kept_boxes;
  for (std::size_t i : keep) kept_boxes.push_back(boxes[i]);
  const FeatureMap mask_logits = model.mask_head(pass, kept_boxes);

  for (std::size_t j = 0; j < keep.size(); ++j) {
    BinaryMask mask = largest_component(paste_mask(mask_logits, int(j), kept_boxes[j],
                                                   image.height, image.width,
                                                   config.mask_threshold));
    if (mask.count() == 0) continue;
    const RotatedRect rect = mask_min_area_rect(mask);
    const std::vector<Point2> outline =
        config.contour_output ? convex_hull(mask_corners(mask)) : rect.corners();
    std::optional<Polygon> polygon = clamp_polygon(outline, image.height, image.width);
    if (!polygon) continue;
    TextInstance t{std::move(mask), std::move(*polygon), rect, kept_boxes[j], {}, {}, 0.5, 0.0};
    t.cs = ScorePair::from_text(text_probs[keep[j]]);
    if (out.has_seg_map) {
      t.is = ScorePair::from_text(instance_score(t.mask, out.seg_probabilities));
    }
    t.fused = fused_score(t.cs, t.is);
    t.score = t.cs.text;
    out.instances.push_back(std::move(t));
  }
  return out;
}

std::vector<TextInstance> finalize(const Candidates& candidates, const InferenceConfig& config,
                                   RescoreMode mode) {
  if (mode == RescoreMode::kOn && !candidates.has_seg_map) {
    throw std::invalid_argument(
        "re-scoring needs the global segmentation map; the model has no text context module");
  }
  std::vector<TextInstance> ranked = rescore_toggle(candidates.instances, mode);
  std::vector<ScoredPolygon> polys;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].score < config.score_threshold) continue;
    polys.push_back({ranked[i].polygon, ranked[i].score});
    index.push_back(i);
  }
  std::vector<TextInstance> out;
  for (std::size_t k : polygon_nms(polys, config.polygon_nms_iou)) {
    out.push_back(std::move(ranked[index[k]]));
  }
  return out;
}

std::vector<TextInstance> detect(const Detector& model, const Image& image,
                                 const InferenceConfig& config) {
  const RescoreMode mode = config.rescore ? RescoreMode::kOn : RescoreMode::kOff;
  if (mode == RescoreMode::kOn && !model.config().tcm) {
    throw std::invalid_argument(
        "re-scoring needs the text context module; disable it (--rs off) for this model");
  }
  return finalize(detect_candidates(model, image, config), config, mode);
}

void write_detections(const std::vector<TextInstance>& instances,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write detections " + path.string());
  char buf[64];
  for (const TextInstance& t : instances) {
    for (const Point2& p : t.polygon.vertices()) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f,", p.x, p.y);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.6f", t.score);
    out << buf << '\n';
  }
  if (!out) throw IoError("failed writing detections " + path.string());
}

void write_seg_map(const FeatureMap& probabilities, int height, int width,
                   const std::filesystem::path& path) {
  if (probabilities.c() != 2 || probabilities.h() < height || probabilities.w() < width) {
    throw ShapeError("write_seg_map: map " + probabilities.shape().to_string() +
                     " does not cover the image");
  }
  std::vector<std::uint8_t> gray(std::size_t(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double p = std::clamp<double>(probabilities.at(0, kTextChannel, y, x), 0.0, 1.0);
      gray[std::size_t(y) * width + x] = static_cast<std::uint8_t>(std::lround(p * 255.0));
    }
  }
  write_pgm(gray, height, width, path);
}

}  // namespace ctxdet
