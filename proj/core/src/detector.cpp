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

#include "ctxdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctxdet {

namespace {

const double kMaxLogScale = std::log(1000.0 / 16.0);

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model: " + what); };
  if (stem_channels < 1) fail("stem_channels must be >= 1");
  for (int c : backbone_channels) {
    if (c < 1) fail("backbone_channels entries must be >= 1");
  }
  if (pyramid_channels < 1) fail("pyramid_channels must be >= 1");
  for (double s : anchor_sizes) {
    if (!(s > 0)) fail("anchor_sizes entries must be > 0");
  }
  if (anchor_ratios.empty()) fail("anchor_ratios must not be empty");
  for (double r : anchor_ratios) {
    if (!(r > 0)) fail("anchor_ratios entries must be > 0");
  }
  if (box_pool < 1 || mask_pool < 1) fail("box_pool and mask_pool must be >= 1");
  if (box_hidden < 1 || mask_channels < 1) fail("box_hidden and mask_channels must be >= 1");
  if (!(fpn_canonical_size > 0)) fail("fpn_canonical_size must be > 0");
  if (!(new_layer_std >= 0)) fail("new_layer_std must be >= 0");
}

std::vector<Anchor> generate_anchors(int grid_h, int grid_w, int stride, double base_size,
                                     std::span<const double> ratios) {
  if (grid_h < 0 || grid_w < 0 || stride < 1 || !(base_size > 0)) {
    throw std::invalid_argument("generate_anchors: invalid grid, stride or base size");
  }
  std::vector<Anchor> out;
  out.reserve(std::size_t(grid_h) * grid_w * ratios.size());
  for (int y = 0; y < grid_h; ++y) {
    for (int x = 0; x < grid_w; ++x) {
      for (double r : ratios) {
        const double sr = std::sqrt(r);
        out.push_back({(x + 0.5) * stride, (y + 0.5) * stride, base_size * sr, base_size / sr});
      }
    }
  }
  return out;
}

BoxDeltas encode_box(const AxisRect& target, const AxisRect& anchor) {
  if (!target.valid() || !anchor.valid()) {
    throw GeometryError("encode_box: boxes need positive width and height");
  }
  const double aw = anchor.width();
  const double ah = anchor.height();
  const double ax = anchor.x_min + 0.5 * aw;
  const double ay = anchor.y_min + 0.5 * ah;
  const double tw = target.width();
  const double th = target.height();
  const double tx = target.x_min + 0.5 * tw;
  const double ty = target.y_min + 0.5 * th;
  return {(tx - ax) / aw, (ty - ay) / ah, std::log(tw / aw), std::log(th / ah)};
}

AxisRect decode_box(const BoxDeltas& d, const AxisRect& anchor) {
  if (!anchor.valid()) throw GeometryError("decode_box: anchor needs positive extent");
  const double aw = anchor.width();
  const double ah = anchor.height();
  const double cx = anchor.x_min + 0.5 * aw + d[0] * aw;
  const double cy = anchor.y_min + 0.5 * ah + d[1] * ah;
  const double w = aw * std::exp(std::min(d[2], kMaxLogScale));
  const double h = ah * std::exp(std::min(d[3], kMaxLogScale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

AxisRect clip_box(const AxisRect& b, int height, int width) {
  return {std::clamp(b.x_min, 0.0, double(width)), std::clamp(b.y_min, 0.0, double(height)),
          std::clamp(b.x_max, 0.0, double(width)), std::clamp(b.y_max, 0.0, double(height))};
}

std::vector<std::size_t> box_nms(std::span<const AxisRect> boxes, std::span<const double> scores,
                                 double iou_threshold) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("box_nms: boxes and scores differ in length");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<char> dead(boxes.size(), 0);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t a = order[i];
    if (dead[a]) continue;
    keep.push_back(a);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t b = order[j];
      if (!dead[b] && box_iou(boxes[a], boxes[b]) > iou_threshold) dead[b] = 1;
    }
  }
  return keep;
}

int fpn_level(const AxisRect& box, int canonical_level, double canonical_size) {
  const double s = std::sqrt(std::max(box.area(), 0.0));
  const double lvl = std::floor(canonical_level + std::log2(s / canonical_size + 1e-8));
  return static_cast<int>(std::clamp(lvl, double(kMinLevel), double(kMaxLevel)));
}

RpnTargets assign_rpn_targets(std::span<const AxisRect> anchors, std::span<const AxisRect> gt,
                              const RpnParams& params, std::span<const AxisRect> ignore_boxes) {
  const std::size_t na = anchors.size();
  const std::size_t ng = gt.size();
  RpnTargets t;
  t.labels.assign(na, AnchorLabel::kIgnore);
  t.matched_gt.assign(na, -1);
  t.deltas.assign(na, BoxDeltas{0, 0, 0, 0});

  std::vector<double> iou(na * ng, 0.0);
  std::vector<double> best_per_gt(ng, 0.0);
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t g = 0; g < ng; ++g) {
      const double v = box_iou(anchors[a], gt[g]);
      iou[a * ng + g] = v;
      best_per_gt[g] = std::max(best_per_gt[g], v);
    }
  }
  for (std::size_t a = 0; a < na; ++a) {
    double best = 0.0;
    int arg = -1;
    for (std::size_t g = 0; g < ng; ++g) {
      if (arg < 0 || iou[a * ng + g] > best) {
        best = iou[a * ng + g];
        arg = static_cast<int>(g);
      }
    }
    t.matched_gt[a] = arg;
    if (best < params.negative_iou) {
      t.labels[a] = AnchorLabel::kNegative;
    } else if (best >= params.positive_iou) {
      t.labels[a] = AnchorLabel::kPositive;
    }
    for (std::size_t g = 0; g < ng; ++g) {
      if (best_per_gt[g] > 0.0 && iou[a * ng + g] == best_per_gt[g]) {
        t.labels[a] = AnchorLabel::kPositive;
      }
    }
    if (t.labels[a] == AnchorLabel::kNegative) {
      for (const auto& ig : ignore_boxes) {
        if (box_iou(anchors[a], ig) >= params.negative_iou) {
          t.labels[a] = AnchorLabel::kIgnore;
          break;
        }
      }
    }
    if (t.labels[a] == AnchorLabel::kPositive) {
      t.deltas[a] = encode_box(gt[static_cast<std::size_t>(arg)], anchors[a]);
    }
  }
  return t;
}

std::size_t ParameterStore::add(std::string name, Shape4 shape) {
  if (find(name) != nullptr) throw std::logic_error("duplicate parameter '" + name + "'");
  params_.push_back({std::move(name), FeatureMap(shape), FeatureMap(shape)});
  return params_.size() - 1;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0f);
}

}  // namespace ctxdet
