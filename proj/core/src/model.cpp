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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxdet/detector.hpp"

namespace ctxdet {

namespace {

// FNV-1a, used to give every layer its own init stream.
std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

void fill_normal(FeatureMap& t, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<float>(stddev > 0 ? d(rng) : 0.0);
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct AnchorSlot {
  int level;  // 0..3
  int y;
  int x;
  int a;
};

AnchorSlot locate(const ForwardPass& pass, std::size_t idx, int per_location) {
  int k = 0;
  while (idx >= pass.anchor_offsets[k + 1]) ++k;
  const std::size_t local = idx - pass.anchor_offsets[k];
  const int w = pass.fused.stages[k].w();
  const std::size_t cell = local / per_location;
  return {k, static_cast<int>(cell / w), static_cast<int>(cell % w),
          static_cast<int>(local % per_location)};
}

std::vector<std::size_t> take_shuffled(std::vector<std::size_t> v, std::size_t n,
                                       std::mt19937_64& rng) {
  std::shuffle(v.begin(), v.end(), rng);
  if (v.size() > n) v.resize(n);
  return v;
}

// Polygon mapped into the (size x size) grid of `roi` and rasterized there.
BinaryMask roi_mask_target(const Polygon& poly, const AxisRect& roi, int size) {
  std::vector<Point2> pts;
  pts.reserve(poly.size());
  const double sx = size / roi.width();
  const double sy = size / roi.height();
  for (const auto& p : poly.vertices()) {
    pts.push_back({(p.x - roi.x_min) * sx, (p.y - roi.y_min) * sy});
  }
  try {
    return rasterize(Polygon(std::move(pts)), size, size);
  } catch (const GeometryError&) {
    return BinaryMask(size, size);
  }
}

FeatureMap zeros_like(const FeatureMap& t) { return FeatureMap(t.shape()); }

}  // namespace

struct Detector::BoxHeadCache {
  FeatureMap pooled;
  FeatureMap hidden_pre;
  FeatureMap hidden;
  std::vector<int> levels;
};

struct Detector::MaskHeadCache {
  FeatureMap pooled;
  FeatureMap a1_pre, a1, a2_pre, a2;
  std::vector<int> levels;
};

Detector::Detector(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  auto make_conv = [&](const std::string& name, int in, int out, int k, int stride,
                       double stddev) {
    ConvLayer l;
    l.weight = params_.add(name + ".weight", {out, in, k, k});
    l.bias = params_.add(name + ".bias", {out, 1, 1, 1});
    l.geometry = {stride, k / 2};
    fill_normal(params_[l.weight].value, init_seed ^ name_hash(name), stddev);
    return l;
  };
  auto he = [](int in, int k) { return std::sqrt(2.0 / (in * k * k)); };
  auto lecun = [](int in, int k) { return std::sqrt(1.0 / (in * k * k)); };

  const auto& bc = config_.backbone_channels;
  const int s = config_.stem_channels;
  stem_ = make_conv("backbone.stem", 3, s, 3, 2, he(3, 3));
  b2_down_ = make_conv("backbone.c2.down", s, bc[0], 3, 2, he(s, 3));
  b2_res_ = make_conv("backbone.c2.residual", bc[0], bc[0], 3, 1, 0.5 * he(bc[0], 3));
  b3_down_ = make_conv("backbone.c3.down", bc[0], bc[1], 3, 2, he(bc[0], 3));
  b3_res_ = make_conv("backbone.c3.residual", bc[1], bc[1], 3, 1, 0.5 * he(bc[1], 3));
  b4_down_ = make_conv("backbone.c4.down", bc[1], bc[2], 3, 2, he(bc[1], 3));
  b5_down_ = make_conv("backbone.c5.down", bc[2], bc[3], 3, 2, he(bc[2], 3));

  const int c = config_.pyramid_channels;
  for (int k = 0; k < kPyramidLevels; ++k) {
    const std::string lvl = std::to_string(k + kMinLevel);
    lateral_[k] = make_conv("fpn.lateral" + lvl, bc[k], c, 1, 1, lecun(bc[k], 1));
    output_[k] = make_conv("fpn.output" + lvl, c, c, 3, 1, lecun(c, 3));
  }

  if (config_.tcm) {
    tcm1_ = make_conv("tcm.conv1", c, c, 3, 1, config_.new_layer_std);
    tcm2_ = make_conv("tcm.conv2", c, c, 3, 1, config_.new_layer_std);
    tcm_cls_ = make_conv("tcm.cls", c, 2, 1, 1, config_.new_layer_std);
  }

  const int a = config_.anchors_per_location();
  rpn_conv_ = make_conv("rpn.conv", c, c, 3, 1, he(c, 3));
  rpn_obj_ = make_conv("rpn.objectness", c, a, 1, 1, 0.01);
  rpn_delta_ = make_conv("rpn.deltas", c, 4 * a, 1, 1, 0.01);

  const int p = config_.box_pool;
  auto make_fc = [&](const std::string& name, Shape4 shape, double stddev, std::size_t& w,
                     std::size_t& b) {
    w = params_.add(name + ".weight", shape);
    b = params_.add(name + ".bias", {shape.n, 1, 1, 1});
    fill_normal(params_[w].value, init_seed ^ name_hash(name), stddev);
  };
  make_fc("box.fc", {config_.box_hidden, c, p, p}, std::sqrt(2.0 / (c * p * p)), fc_w_, fc_b_);
  make_fc("box.cls", {2, config_.box_hidden, 1, 1}, 0.01, cls_w_, cls_b_);
  make_fc("box.deltas", {4, config_.box_hidden, 1, 1}, 0.001, reg_w_, reg_b_);

  const int m = config_.mask_channels;
  mask1_ = make_conv("mask.conv1", c, m, 3, 1, he(c, 3));
  mask2_ = make_conv("mask.conv2", m, m, 3, 1, he(m, 3));
  mask_pred_ = make_conv("mask.predictor", m, 1, 1, 1, 0.001);
}

FeatureMap Detector::conv(const ConvLayer& l, const FeatureMap& x) const {
  return conv2d<float>(x, params_[l.weight].value, params_[l.bias].value.values(), l.geometry);
}

FeatureMap Detector::conv_backward(const ConvLayer& l, const FeatureMap& x, const FeatureMap& dy,
                                   bool want_input) {
  auto g = conv2d_backward<float>(x, params_[l.weight].value, dy, l.geometry, want_input);
  params_[l.weight].grad += g.kernel;
  FeatureMap& bg = params_[l.bias].grad;
  for (std::size_t i = 0; i < g.bias.size(); ++i) bg[i] += g.bias[i];
  return std::move(g.input);
}

TcmWeights<float> Detector::tcm_weights() const {
  if (!config_.tcm) throw std::logic_error("model has no text context module");
  auto vec = [&](std::size_t i) {
    const auto v = params_[i].value.values();
    return std::vector<float>(v.begin(), v.end());
  };
  return {params_[tcm1_.weight].value, vec(tcm1_.bias), params_[tcm2_.weight].value,
          vec(tcm2_.bias), params_[tcm_cls_.weight].value, vec(tcm_cls_.bias)};
}

int Detector::pyramid_level(const AxisRect& roi) const {
  return fpn_level(roi, config_.fpn_canonical_level, config_.fpn_canonical_size);
}

FeaturePyramid Detector::build_pyramid(const FeatureMap& image) const {
  return forward(image).raw;
}

ForwardPass Detector::forward(const FeatureMap& image) const {
  if (image.n() != 1 || image.c() != 3) {
    throw ShapeError("forward: expected a (1, 3, H, W) image, got " + image.shape().to_string());
  }
  if (image.h() % 32 != 0 || image.w() % 32 != 0 || image.h() == 0 || image.w() == 0) {
    throw ShapeError("forward: image " + image.shape().to_string() +
                     " must be padded so height and width are multiples of 32");
  }
  ForwardPass f;
  f.input = image;
  f.stem_pre = conv(stem_, image);
  f.stem = relu(f.stem_pre);
  f.b2_pre = conv(b2_down_, f.stem);
  f.b2_mid = relu(f.b2_pre);
  f.b2_res_pre = f.b2_mid + conv(b2_res_, f.b2_mid);
  f.c2 = relu(f.b2_res_pre);
  f.b3_pre = conv(b3_down_, f.c2);
  f.b3_mid = relu(f.b3_pre);
  f.b3_res_pre = f.b3_mid + conv(b3_res_, f.b3_mid);
  f.c3 = relu(f.b3_res_pre);
  f.c4_pre = conv(b4_down_, f.c3);
  f.c4 = relu(f.c4_pre);
  f.c5_pre = conv(b5_down_, f.c4);
  f.c5 = relu(f.c5_pre);

  const std::array<const FeatureMap*, kPyramidLevels> cs{&f.c2, &f.c3, &f.c4, &f.c5};
  f.merged[3] = conv(lateral_[3], f.c5);
  for (int k = 2; k >= 0; --k) {
    f.merged[k] = conv(lateral_[k], *cs[k]) + upsample_nearest2x(f.merged[k + 1]);
  }
  for (int k = 0; k < kPyramidLevels; ++k) f.raw.stages[k] = conv(output_[k], f.merged[k]);

  if (config_.tcm) {
    const TcmWeights<float> w = tcm_weights();
    for (int k = 0; k < kPyramidLevels; ++k) {
      f.tcm[k].branch = text_context_branch(f.raw.stages[k], w, config_.tcm_activation);
      f.tcm[k].attention = pyramid_attention(f.raw.stages[k], f.tcm[k].branch.map);
      f.fused.stages[k] = pyramid_fusion(f.tcm[k].attention.attended, f.tcm[k].branch.gtf);
    }
  } else {
    f.fused = f.raw;
  }

  const int a = config_.anchors_per_location();
  f.anchor_offsets[0] = 0;
  for (int k = 0; k < kPyramidLevels; ++k) {
    f.rpn_pre[k] = conv(rpn_conv_, f.fused.stages[k]);
    f.rpn_hidden[k] = relu(f.rpn_pre[k]);
    f.rpn_objectness[k] = conv(rpn_obj_, f.rpn_hidden[k]);
    f.rpn_deltas[k] = conv(rpn_delta_, f.rpn_hidden[k]);
    const FeatureMap& s = f.fused.stages[k];
    for (const Anchor& an : generate_anchors(s.h(), s.w(), level_stride(k + kMinLevel),
                                             config_.anchor_sizes[k], config_.anchor_ratios)) {
      f.anchors.push_back(an.rect());
    }
    f.anchor_offsets[k + 1] = f.anchor_offsets[k] + std::size_t(s.h()) * s.w() * a;
  }
  return f;
}

std::vector<Proposal> Detector::propose(const ForwardPass& pass, int image_h, int image_w,
                                        const RpnParams& params) const {
  const int a = config_.anchors_per_location();
  const std::size_t n = pass.anchors.size();
  std::vector<float> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AnchorSlot s = locate(pass, i, a);
    logits[i] = pass.rpn_objectness[s.level].at(0, s.a, s.y, s.x);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min<std::size_t>(n, std::max(params.pre_nms_top_k, 0));
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::size_t x, std::size_t y) {
                      return logits[x] > logits[y] || (logits[x] == logits[y] && x < y);
                    });
  order.resize(k);

  std::vector<AxisRect> boxes;
  std::vector<double> scores;
  for (std::size_t i : order) {
    const AnchorSlot s = locate(pass, i, a);
    const FeatureMap& d = pass.rpn_deltas[s.level];
    const BoxDeltas deltas{d.at(0, 4 * s.a, s.y, s.x), d.at(0, 4 * s.a + 1, s.y, s.x),
                           d.at(0, 4 * s.a + 2, s.y, s.x), d.at(0, 4 * s.a + 3, s.y, s.x)};
    const AxisRect box = clip_box(decode_box(deltas, pass.anchors[i]), image_h, image_w);
    if (box.width() < params.min_size || box.height() < params.min_size) continue;
    boxes.push_back(box);
    scores.push_back(logits[i]);
  }
  std::vector<Proposal> out;
  for (std::size_t i : box_nms(boxes, scores, params.nms_iou)) {
    if (static_cast<int>(out.size()) >= params.post_nms_top_m) break;
    out.push_back({boxes[i], sigmoid(scores[i])});
  }
  return out;
}

FeatureMap Detector::roi_features(const ForwardPass& pass, std::span<const AxisRect> rois,
                                  int size, std::vector<int>& levels) const {
  const int c = config_.pyramid_channels;
  FeatureMap out(static_cast<int>(rois.size()), c, size, size);
  levels.assign(rois.size(), 0);
  const std::size_t block = std::size_t(c) * size * size;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const int level = pyramid_level(rois[r]);
    levels[r] = level;
    const RoiAlignParams p{1.0 / level_stride(level), size, size, 2};
    const FeatureMap pooled = roi_align(pass.fused.stages[level - kMinLevel], rois[r], p);
    std::copy(pooled.data(), pooled.data() + block, out.data() + r * block);
  }
  return out;
}

BoxHeadOutput Detector::box_head_impl(const ForwardPass& pass, std::span<const AxisRect> rois,
                                      BoxHeadCache* cache) const {
  BoxHeadOutput out;
  if (rois.empty()) {
    out.cls_logits = FeatureMap(0, 2, 1, 1);
    out.deltas = FeatureMap(0, 4, 1, 1);
    return out;
  }
  BoxHeadCache local;
  BoxHeadCache& c = cache != nullptr ? *cache : local;
  c.pooled = roi_features(pass, rois, config_.box_pool, c.levels);
  c.hidden_pre = linear<float>(c.pooled, params_[fc_w_].value, params_[fc_b_].value.values());
  c.hidden = relu(c.hidden_pre);
  out.cls_logits = linear<float>(c.hidden, params_[cls_w_].value, params_[cls_b_].value.values());
  out.deltas = linear<float>(c.hidden, params_[reg_w_].value, params_[reg_b_].value.values());
  return out;
}

BoxHeadOutput Detector::box_head(const ForwardPass& pass, std::span<const AxisRect> rois) const {
  return box_head_impl(pass, rois, nullptr);
}

void Detector::box_head_backward(const BoxHeadCache& c, std::span<const AxisRect> rois,
                                 const FeatureMap& d_cls, const FeatureMap& d_deltas,
                                 std::array<FeatureMap, kPyramidLevels>& d_fused) {
  auto acc = [&](std::size_t w, std::size_t b, const ConvGrads<float>& g) {
    params_[w].grad += g.kernel;
    for (std::size_t i = 0; i < g.bias.size(); ++i) params_[b].grad[i] += g.bias[i];
  };
  const auto gc = linear_backward<float>(c.hidden, params_[cls_w_].value, d_cls);
  const auto gr = linear_backward<float>(c.hidden, params_[reg_w_].value, d_deltas);
  acc(cls_w_, cls_b_, gc);
  acc(reg_w_, reg_b_, gr);
  const FeatureMap d_hidden = relu_backward(c.hidden_pre, gc.input + gr.input);
  const auto gf = linear_backward<float>(c.pooled, params_[fc_w_].value, d_hidden);
  acc(fc_w_, fc_b_, gf);
  const int p = config_.box_pool;
  const std::size_t block = std::size_t(config_.pyramid_channels) * p * p;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    FeatureMap g(1, config_.pyramid_channels, p, p);
    std::copy(gf.input.data() + r * block, gf.input.data() + (r + 1) * block, g.data());
    const int level = c.levels[r];
    roi_align_backward(g, rois[r], RoiAlignParams{1.0 / level_stride(level), p, p, 2},
                       d_fused[level - kMinLevel]);
  }
}

FeatureMap Detector::mask_head_impl(const ForwardPass& pass, std::span<const AxisRect> rois,
                                    MaskHeadCache* cache) const {
  const int m = config_.mask_pool;
  if (rois.empty()) return FeatureMap(0, 1, m, m);
  MaskHeadCache local;
  MaskHeadCache& c = cache != nullptr ? *cache : local;
  c.pooled = roi_features(pass, rois, m, c.levels);
  c.a1_pre = conv(mask1_, c.pooled);
  c.a1 = relu(c.a1_pre);
  c.a2_pre = conv(mask2_, c.a1);
  c.a2 = relu(c.a2_pre);
  return conv(mask_pred_, c.a2);
}

FeatureMap Detector::mask_head(const ForwardPass& pass, std::span<const AxisRect> rois) const {
  return mask_head_impl(pass, rois, nullptr);
}

void Detector::mask_head_backward(const MaskHeadCache& c, std::span<const AxisRect> rois,
                                  const FeatureMap& d_logits,
                                  std::array<FeatureMap, kPyramidLevels>& d_fused) {
  const FeatureMap d_a2 = conv_backward(mask_pred_, c.a2, d_logits);
  const FeatureMap d_a1 = conv_backward(mask2_, c.a1, relu_backward(c.a2_pre, d_a2));
  const FeatureMap d_pooled = conv_backward(mask1_, c.pooled, relu_backward(c.a1_pre, d_a1));
  const int m = config_.mask_pool;
  const std::size_t block = std::size_t(config_.pyramid_channels) * m * m;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    FeatureMap g(1, config_.pyramid_channels, m, m);
    std::copy(d_pooled.data() + r * block, d_pooled.data() + (r + 1) * block, g.data());
    const int level = c.levels[r];
    roi_align_backward(g, rois[r], RoiAlignParams{1.0 / level_stride(level), m, m, 2},
                       d_fused[level - kMinLevel]);
  }
}

GlobalSegMap<float> Detector::seg_map(const ForwardPass& pass) const {
  if (!config_.tcm) throw std::logic_error("seg_map: model has no text context module");
  std::vector<FeatureMap> maps;
  for (const auto& t : pass.tcm) maps.push_back(t.branch.map);
  return global_seg_map<float>(maps, pass.input.h(), pass.input.w());
}

void Detector::backward_trunk(const ForwardPass& f,
                              std::array<FeatureMap, kPyramidLevels>& d_fused,
                              const std::array<FeatureMap, kPyramidLevels>& d_maps) {
  std::array<FeatureMap, kPyramidLevels> d_raw;
  for (int k = 0; k < kPyramidLevels; ++k) {
    if (config_.tcm) {
      const TcmWeights<float> w = tcm_weights();
      const TcmStage& t = f.tcm[k];
      const auto ag = pyramid_attention_backward(f.raw.stages[k], t.attention, d_fused[k]);
      FeatureMap d_map = ag.map;
      if (!d_maps[k].empty()) d_map += d_maps[k];
      const auto bg = text_context_branch_backward(f.raw.stages[k], w, t.branch, d_fused[k], d_map,
                                                   config_.tcm_activation);
      params_[tcm1_.weight].grad += bg.weights.conv1_w;
      params_[tcm2_.weight].grad += bg.weights.conv2_w;
      params_[tcm_cls_.weight].grad += bg.weights.cls_w;
      auto add_b = [&](std::size_t idx, const std::vector<float>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) params_[idx].grad[i] += g[i];
      };
      add_b(tcm1_.bias, bg.weights.conv1_b);
      add_b(tcm2_.bias, bg.weights.conv2_b);
      add_b(tcm_cls_.bias, bg.weights.cls_b);
      d_raw[k] = bg.input + ag.input;
    } else {
      d_raw[k] = d_fused[k];
    }
  }

  std::array<FeatureMap, kPyramidLevels> d_merged;
  for (int k = 0; k < kPyramidLevels; ++k) d_merged[k] = conv_backward(output_[k], f.merged[k], d_raw[k]);
  const std::array<const FeatureMap*, kPyramidLevels> cs{&f.c2, &f.c3, &f.c4, &f.c5};
  std::array<FeatureMap, kPyramidLevels> d_c;
  for (int k = 0; k < kPyramidLevels; ++k) {
    if (k > 0) d_merged[k] += upsample_nearest2x_backward(d_merged[k - 1]);
    d_c[k] = conv_backward(lateral_[k], *cs[k], d_merged[k]);
  }

  FeatureMap d = relu_backward(f.c5_pre, d_c[3]);
  d_c[2] += conv_backward(b5_down_, f.c4, d);
  d = relu_backward(f.c4_pre, d_c[2]);
  d_c[1] += conv_backward(b4_down_, f.c3, d);

  FeatureMap d_sum = relu_backward(f.b3_res_pre, d_c[1]);
  FeatureMap d_mid = d_sum + conv_backward(b3_res_, f.b3_mid, d_sum);
  d_c[0] += conv_backward(b3_down_, f.c2, relu_backward(f.b3_pre, d_mid));

  d_sum = relu_backward(f.b2_res_pre, d_c[0]);
  d_mid = d_sum + conv_backward(b2_res_, f.b2_mid, d_sum);
  const FeatureMap d_stem = conv_backward(b2_down_, f.stem, relu_backward(f.b2_pre, d_mid));
  conv_backward(stem_, f.input, relu_backward(f.stem_pre, d_stem), false);
}

LossComponents Detector::train_step(const FeatureMap& image, const GroundTruth& gt,
                                    const TrainStepOptions& opt, std::mt19937_64& rng) {
  const ForwardPass f = forward(image);
  const int img_h = gt.global_map.height;
  const int img_w = gt.global_map.width;
  const float scale = static_cast<float>(opt.grad_scale);
  const int a = config_.anchors_per_location();
  LossComponents L;

  std::array<FeatureMap, kPyramidLevels> d_fused;
  std::array<FeatureMap, kPyramidLevels> d_maps;
  for (int k = 0; k < kPyramidLevels; ++k) d_fused[k] = zeros_like(f.fused.stages[k]);

  std::vector<AxisRect> gt_boxes;
  for (const auto& inst : gt.instances) gt_boxes.push_back(inst.box);
  std::vector<AxisRect> ignore_boxes;
  for (const auto& poly : gt.ignore_regions) {
    const AxisRect b = clip_box(axis_aligned_bbox(poly), img_h, img_w);
    if (b.valid()) ignore_boxes.push_back(b);
  }

  // Region proposal losses.
  std::array<FeatureMap, kPyramidLevels> d_obj, d_del;
  for (int k = 0; k < kPyramidLevels; ++k) {
    d_obj[k] = zeros_like(f.rpn_objectness[k]);
    d_del[k] = zeros_like(f.rpn_deltas[k]);
  }
  {
    const RpnTargets t = assign_rpn_targets(f.anchors, gt_boxes, opt.rpn, ignore_boxes);
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < t.labels.size(); ++i) {
      if (t.labels[i] == AnchorLabel::kPositive) pos.push_back(i);
      if (t.labels[i] == AnchorLabel::kNegative) neg.push_back(i);
    }
    const auto max_pos = static_cast<std::size_t>(opt.rpn.batch_per_image * opt.rpn.positive_fraction);
    pos = take_shuffled(std::move(pos), max_pos, rng);
    neg = take_shuffled(std::move(neg), opt.rpn.batch_per_image - pos.size(), rng);
    std::vector<std::size_t> sampled = pos;
    sampled.insert(sampled.end(), neg.begin(), neg.end());
    if (!sampled.empty()) {
      FeatureMap logits(static_cast<int>(sampled.size()), 1, 1, 1);
      std::vector<float> targets(sampled.size(), 0.0f);
      for (std::size_t i = 0; i < sampled.size(); ++i) {
        const AnchorSlot s = locate(f, sampled[i], a);
        logits[i] = f.rpn_objectness[s.level].at(0, s.a, s.y, s.x);
        targets[i] = i < pos.size() ? 1.0f : 0.0f;
      }
      const auto obj = sigmoid_bce<float>(logits, targets);
      L.rpn += obj.loss;
      for (std::size_t i = 0; i < sampled.size(); ++i) {
        const AnchorSlot s = locate(f, sampled[i], a);
        d_obj[s.level].at(0, s.a, s.y, s.x) += obj.grad[i] * scale;
      }
      if (!pos.empty()) {
        FeatureMap pred(static_cast<int>(pos.size()), 4, 1, 1);
        std::vector<float> tgt(pos.size() * 4);
        for (std::size_t i = 0; i < pos.size(); ++i) {
          const AnchorSlot s = locate(f, pos[i], a);
          for (int j = 0; j < 4; ++j) {
            pred[i * 4 + j] = f.rpn_deltas[s.level].at(0, 4 * s.a + j, s.y, s.x);
            tgt[i * 4 + j] = static_cast<float>(t.deltas[pos[i]][j]);
          }
        }
        const auto box = smooth_l1<float>(pred, tgt, 1.0f / 9.0f, static_cast<float>(sampled.size()));
        L.rpn += box.loss;
        for (std::size_t i = 0; i < pos.size(); ++i) {
          const AnchorSlot s = locate(f, pos[i], a);
          for (int j = 0; j < 4; ++j) {
            d_del[s.level].at(0, 4 * s.a + j, s.y, s.x) += box.grad[i * 4 + j] * scale;
          }
        }
      }
    }
  }

  // RoI sampling over proposals plus ground truth.
  std::vector<AxisRect> candidates;
  for (const auto& p : propose(f, img_h, img_w, opt.rpn)) candidates.push_back(p.box);
  for (const auto& b : gt_boxes) candidates.push_back(b);
  std::vector<std::size_t> fg, bg;
  std::vector<int> best_gt(candidates.size(), -1);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double best = 0.0;
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const double v = box_iou(candidates[i], gt_boxes[g]);
      if (v > best) {
        best = v;
        best_gt[i] = static_cast<int>(g);
      }
    }
    if (best >= opt.roi.foreground_iou) {
      fg.push_back(i);
      continue;
    }
    bool near_ignore = false;
    for (const auto& ig : ignore_boxes) {
      if (box_iou(candidates[i], ig) >= opt.roi.foreground_iou) near_ignore = true;
    }
    if (!near_ignore) bg.push_back(i);
  }
  const auto max_fg =
      static_cast<std::size_t>(opt.roi.batch_per_image * opt.roi.foreground_fraction);
  fg = take_shuffled(std::move(fg), max_fg, rng);
  bg = take_shuffled(std::move(bg), opt.roi.batch_per_image - fg.size(), rng);

  std::vector<AxisRect> rois;
  std::vector<int> labels;
  for (std::size_t i : fg) {
    rois.push_back(candidates[i]);
    labels.push_back(1);
  }
  for (std::size_t i : bg) {
    rois.push_back(candidates[i]);
    labels.push_back(0);
  }
  if (!rois.empty()) {
    BoxHeadCache cache;
    const BoxHeadOutput out = box_head_impl(f, rois, &cache);
    const auto cls = softmax_cross_entropy_rows<float>(out.cls_logits, labels);
    L.cls = cls.loss;
    FeatureMap d_cls = cls.grad;
    d_cls *= static_cast<float>(opt.weights.cls) * scale;
    FeatureMap d_deltas(out.deltas.shape());
    if (!fg.empty()) {
      FeatureMap pred(static_cast<int>(fg.size()), 4, 1, 1);
      std::vector<float> tgt(fg.size() * 4);
      for (std::size_t i = 0; i < fg.size(); ++i) {
        const BoxDeltas t = encode_box(gt_boxes[best_gt[fg[i]]], rois[i]);
        for (int j = 0; j < 4; ++j) {
          pred[i * 4 + j] = out.deltas[i * 4 + j];
          tgt[i * 4 + j] = static_cast<float>(t[j]);
        }
      }
      const auto box = smooth_l1<float>(pred, tgt, 1.0f, static_cast<float>(rois.size()));
      L.box = box.loss;
      for (std::size_t i = 0; i < fg.size() * 4; ++i) {
        d_deltas[i] = box.grad[i] * static_cast<float>(opt.weights.box) * scale;
      }
    }
    box_head_backward(cache, rois, d_cls, d_deltas, d_fused);
  }

  // Mask loss on a subset of the foreground RoIs.
  const std::size_t n_mask = std::min<std::size_t>(fg.size(), std::max(opt.roi.max_mask_rois, 0));
  if (n_mask > 0) {
    const std::span<const AxisRect> mrois(rois.data(), n_mask);
    MaskHeadCache cache;
    const FeatureMap logits = mask_head_impl(f, mrois, &cache);
    const int m = config_.mask_pool;
    std::vector<float> targets(logits.size(), 0.0f);
    for (std::size_t i = 0; i < n_mask; ++i) {
      const auto& poly = gt.instances[best_gt[fg[i]]].polygon;
      const BinaryMask t = roi_mask_target(poly, mrois[i], m);
      for (std::size_t j = 0; j < t.bits.size(); ++j) targets[i * m * m + j] = t.bits[j];
    }
    const auto loss = sigmoid_bce<float>(logits, targets);
    L.mask = loss.loss;
    FeatureMap d = loss.grad;
    d *= static_cast<float>(opt.weights.mask) * scale;
    mask_head_backward(cache, mrois, d, d_fused);
  }

  // Global text segmentation loss.
  if (config_.tcm) {
    std::vector<FeatureMap> maps;
    for (const auto& t : f.tcm) maps.push_back(t.branch.map);
    const int ph = f.input.h();
    const int pw = f.input.w();
    const BinaryMask exclude =
        opt.seg_ignore == SegIgnoreMode::kMasked ? gt.ignore_map : BinaryMask{};
    const FeatureMap global = global_seg_logits<float>(maps, ph, pw);
    const auto loss = seg_loss(global, gt.global_map, exclude);
    L.gts = loss.loss;
    FeatureMap d = loss.grad;
    d *= static_cast<float>(opt.weights.gts) * scale;
    auto per_stage = global_seg_logits_backward<float>(maps, d);
    if (config_.seg_per_stage_loss) {
      const float share = static_cast<float>(opt.weights.gts) * scale / kPyramidLevels;
      for (int k = 0; k < kPyramidLevels; ++k) {
        const auto sl = seg_loss(bilinear_resize(maps[k], ph, pw), gt.global_map, exclude);
        L.gts += sl.loss / kPyramidLevels;
        FeatureMap g = sl.grad;
        g *= share;
        per_stage[k] += bilinear_resize_backward(g, maps[k].h(), maps[k].w());
      }
    }
    for (int k = 0; k < kPyramidLevels; ++k) d_maps[k] = std::move(per_stage[k]);
  }

  // RPN head backward, then the shared trunk.
  for (int k = 0; k < kPyramidLevels; ++k) {
    FeatureMap d_hidden = conv_backward(rpn_obj_, f.rpn_hidden[k], d_obj[k]);
    d_hidden += conv_backward(rpn_delta_, f.rpn_hidden[k], d_del[k]);
    d_fused[k] += conv_backward(rpn_conv_, f.fused.stages[k], relu_backward(f.rpn_pre[k], d_hidden));
  }
  backward_trunk(f, d_fused, d_maps);
  return L;
}

}  // namespace ctxdet
