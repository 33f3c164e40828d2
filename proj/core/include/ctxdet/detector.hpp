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

// Two-stage instance detector: residual backbone, feature pyramid, region
// proposal network, box/class head and mask head, with the text context
// module spliced between the pyramid and everything that consumes it.

#ifndef CTXDET_DETECTOR_HPP_
#define CTXDET_DETECTOR_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctxdet/dataio.hpp"
#include "ctxdet/geometry.hpp"
#include "ctxdet/netops.hpp"
#include "ctxdet/tcm.hpp"
#include "ctxdet/tensor.hpp"

namespace ctxdet {

inline constexpr int kPyramidLevels = 4;  // S2..S5
inline constexpr int kMinLevel = 2;
inline constexpr int kMaxLevel = 5;

/// Stride of pyramid level k (2..5).
inline int level_stride(int level) { return 1 << level; }

/// Architecture. Everything here shapes the parameter store and is hashed
/// into checkpoints.
struct ModelConfig {
  int stem_channels = 16;
  std::array<int, 4> backbone_channels{16, 32, 48, 48};  // C2..C5
  int pyramid_channels = 32;                              // C
  bool tcm = true;
  Activation tcm_activation = Activation::kRelu;
  std::array<double, 4> anchor_sizes{16, 32, 64, 128};    // per level, sqrt(area)
  std::vector<double> anchor_ratios{0.2, 0.5, 1.0, 2.0, 5.0};  // width / height
  int box_pool = 7;
  int mask_pool = 14;
  int box_hidden = 32;
  int mask_channels = 16;
  double fpn_canonical_size = 64.0;
  int fpn_canonical_level = 4;
  double new_layer_std = 0.001;  // text context branch init
  bool seg_per_stage_loss = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  int anchors_per_location() const { return static_cast<int>(anchor_ratios.size()); }
};

struct Anchor {
  double cx = 0;
  double cy = 0;
  double w = 0;
  double h = 0;

  AxisRect rect() const { return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }
};

/// Anchors of one stage in (y, x, ratio) order. Each anchor has area
/// base_size^2 and width/height equal to its ratio; centers sit at
/// ((x + 0.5) * stride, (y + 0.5) * stride).
std::vector<Anchor> generate_anchors(int grid_h, int grid_w, int stride, double base_size,
                                     std::span<const double> ratios);

using BoxDeltas = std::array<double, 4>;

/// (dx, dy, dw, dh) = ((tx - ax) / aw, (ty - ay) / ah, log(tw / aw), log(th / ah)).
/// Throws GeometryError for non-positive extents.
BoxDeltas encode_box(const AxisRect& target, const AxisRect& anchor);
/// Inverse of encode_box. dw/dh are clamped to log(1000/16) first.
AxisRect decode_box(const BoxDeltas& deltas, const AxisRect& anchor);

AxisRect clip_box(const AxisRect& box, int height, int width);

/// Greedy axis-aligned NMS; returns kept indices in descending score order
/// (ties: lower index first). Drops a box iff IoU with a kept box > threshold.
std::vector<std::size_t> box_nms(std::span<const AxisRect> boxes, std::span<const double> scores,
                                 double iou_threshold);

/// Pyramid level for a box: floor(k0 + log2(sqrt(w h) / canonical)) clamped
/// to [2, 5].
int fpn_level(const AxisRect& box, int canonical_level, double canonical_size);

struct RpnParams {
  double positive_iou = 0.7;
  double negative_iou = 0.3;
  int batch_per_image = 128;
  double positive_fraction = 0.5;
  double nms_iou = 0.7;
  int pre_nms_top_k = 1000;
  int post_nms_top_m = 300;
  double min_size = 1.0;
};

struct RoiParams {
  int batch_per_image = 64;
  double foreground_fraction = 0.25;
  double foreground_iou = 0.5;
  int max_mask_rois = 16;
};

enum class AnchorLabel : std::int8_t { kIgnore = -1, kNegative = 0, kPositive = 1 };

struct RpnTargets {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;     // -1 when there is no GT
  std::vector<BoxDeltas> deltas;   // zero for non-positives
};

/// Positive: IoU >= positive_iou with some GT, or the (tied) best anchor of a
/// GT with nonzero overlap. Negative: max IoU < negative_iou. Everything else
/// ignored. Anchors overlapping an ignore box by IoU >= negative_iou that
/// would otherwise be negative are ignored too.
RpnTargets assign_rpn_targets(std::span<const AxisRect> anchors, std::span<const AxisRect> gt,
                              const RpnParams& params,
                              std::span<const AxisRect> ignore_boxes = {});

struct Proposal {
  AxisRect box;
  double objectness = 0.0;  // sigmoid of the RPN logit
};

// ---------------------------------------------------------------------------
// Parameters.

struct Parameter {
  std::string name;
  FeatureMap value;
  FeatureMap grad;
};

class ParameterStore {
 public:
  std::size_t add(std::string name, Shape4 shape);
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  /// nullptr when absent.
  const Parameter* find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

// ---------------------------------------------------------------------------
// The network.

struct ConvLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  ConvGeometry geometry;
};

/// Per-stage features in level order S2..S5.
struct FeaturePyramid {
  std::array<FeatureMap, kPyramidLevels> stages;
};

struct TcmStage {
  TcmBranchOutput<float> branch;
  AttentionOutput<float> attention;
};

/// Everything one forward pass computes, kept for the backward pass.
struct ForwardPass {
  FeatureMap input;
  // backbone
  FeatureMap stem_pre, stem;
  FeatureMap b2_pre, b2_mid, b2_res_pre, c2;
  FeatureMap b3_pre, b3_mid, b3_res_pre, c3;
  FeatureMap c4_pre, c4;
  FeatureMap c5_pre, c5;
  // pyramid
  std::array<FeatureMap, kPyramidLevels> merged;  // P2..P5 before the output conv
  FeaturePyramid raw;                             // S_k
  FeaturePyramid fused;                           // S_k after the text context module
  std::array<TcmStage, kPyramidLevels> tcm;
  // rpn
  std::array<FeatureMap, kPyramidLevels> rpn_pre, rpn_hidden, rpn_objectness, rpn_deltas;
  std::vector<AxisRect> anchors;                  // all levels, level-major
  std::array<std::size_t, kPyramidLevels + 1> anchor_offsets{};
};

struct BoxHeadOutput {
  FeatureMap cls_logits;  // (R, 2, 1, 1)
  FeatureMap deltas;      // (R, 4, 1, 1)
};

struct LossComponents {
  double rpn = 0;
  double cls = 0;
  double box = 0;
  double mask = 0;
  double gts = 0;
};

/// Weights of the classification, box, mask and segmentation loss terms.
struct LossWeights {
  double cls = 1.0;
  double box = 1.0;
  double mask = 1.0;
  double gts = 1.0;
};

enum class SegIgnoreMode { kBackground, kMasked };

struct TrainStepOptions {
  LossWeights weights;
  double grad_scale = 1.0;  // e.g. 1 / batch size
  RpnParams rpn;
  RoiParams roi;
  SegIgnoreMode seg_ignore = SegIgnoreMode::kBackground;
};

class Detector {
 public:
  Detector(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  /// Backbone + pyramid (raw S2..S5). Height and width must be multiples of 32.
  FeaturePyramid build_pyramid(const FeatureMap& image) const;

  ForwardPass forward(const FeatureMap& image) const;

  /// Decoded, clipped, NMS-filtered proposals within an image of the given size.
  std::vector<Proposal> propose(const ForwardPass& pass, int image_h, int image_w,
                                const RpnParams& params) const;

  BoxHeadOutput box_head(const ForwardPass& pass, std::span<const AxisRect> rois) const;
  /// (R, 1, mask_pool, mask_pool) logits.
  FeatureMap mask_head(const ForwardPass& pass, std::span<const AxisRect> rois) const;

  /// Global text map at the padded input resolution (requires the TCM).
  GlobalSegMap<float> seg_map(const ForwardPass& pass) const;

  /// Forward, losses and backward on one image. Gradients (scaled by the
  /// loss weights and grad_scale) are accumulated into the parameter store.
  LossComponents train_step(const FeatureMap& image, const GroundTruth& gt,
                            const TrainStepOptions& options, std::mt19937_64& rng);

  /// Shared text context weights as the branch expects them.
  TcmWeights<float> tcm_weights() const;

  int pyramid_level(const AxisRect& roi) const;

 private:
  struct BoxHeadCache;
  struct MaskHeadCache;

  FeatureMap conv(const ConvLayer& l, const FeatureMap& x) const;
  FeatureMap conv_backward(const ConvLayer& l, const FeatureMap& x, const FeatureMap& dy,
                           bool want_input = true);
  BoxHeadOutput box_head_impl(const ForwardPass& pass, std::span<const AxisRect> rois,
                              BoxHeadCache* cache) const;
  void box_head_backward(const BoxHeadCache& cache, std::span<const AxisRect> rois,
                         const FeatureMap& d_cls, const FeatureMap& d_deltas,
                         std::array<FeatureMap, kPyramidLevels>& d_fused);
  FeatureMap mask_head_impl(const ForwardPass& pass, std::span<const AxisRect> rois,
                            MaskHeadCache* cache) const;
  void mask_head_backward(const MaskHeadCache& cache, std::span<const AxisRect> rois,
                          const FeatureMap& d_logits,
                          std::array<FeatureMap, kPyramidLevels>& d_fused);
  FeatureMap roi_features(const ForwardPass& pass, std::span<const AxisRect> rois, int size,
                          std::vector<int>& levels) const;
  void backward_trunk(const ForwardPass& pass, std::array<FeatureMap, kPyramidLevels>& d_fused,
                      const std::array<FeatureMap, kPyramidLevels>& d_maps);

  ModelConfig config_;
  ParameterStore params_;
  ConvLayer stem_, b2_down_, b2_res_, b3_down_, b3_res_, b4_down_, b5_down_;
  std::array<ConvLayer, kPyramidLevels> lateral_, output_;
  ConvLayer tcm1_, tcm2_, tcm_cls_;
  ConvLayer rpn_conv_, rpn_obj_, rpn_delta_;
  std::size_t fc_w_ = 0, fc_b_ = 0, cls_w_ = 0, cls_b_ = 0, reg_w_ = 0, reg_b_ = 0;
  ConvLayer mask1_, mask2_, mask_pred_;
};

}  // namespace ctxdet

#endif  // CTXDET_DETECTOR_HPP_
