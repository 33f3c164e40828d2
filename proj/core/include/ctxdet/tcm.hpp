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

// Text context module: a shared per-stage branch producing a global text
// feature and 2-channel text/non-text logits, saliency gating of pyramid
// features, feature fusion, and the global segmentation map with its loss.

#ifndef CTXDET_TCM_HPP_
#define CTXDET_TCM_HPP_

#include <span>
#include <string>
#include <vector>

#include "ctxdet/geometry.hpp"
#include "ctxdet/netops.hpp"
#include "ctxdet/tensor.hpp"

namespace ctxdet {

/// Index of the text channel in every 2-channel map.
inline constexpr int kTextChannel = 1;

enum class Activation { kRelu, kLeakyRelu };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a);
template <typename T>
Tensor<T> activate_backward(const Tensor<T>& x, const Tensor<T>& grad_out, Activation a);

/// conv3x3 (C->C) -> act -> conv3x3 (C->C) -> act -> conv1x1 (C->2).
template <typename T>
struct TcmWeights {
  Tensor<T> conv1_w;
  std::vector<T> conv1_b;
  Tensor<T> conv2_w;
  std::vector<T> conv2_b;
  Tensor<T> cls_w;
  std::vector<T> cls_b;
};

template <typename T>
struct TcmBranchOutput {
  Tensor<T> gtf;      // first conv output, pre-activation
  Tensor<T> hidden1;  // act(gtf)
  Tensor<T> pre2;
  Tensor<T> hidden2;  // act(pre2)
  Tensor<T> map;      // 2-channel logits
};

template <typename T>
TcmBranchOutput<T> text_context_branch(const Tensor<T>& s, const TcmWeights<T>& w,
                                       Activation act = Activation::kRelu);

template <typename T>
struct TcmBranchGrads {
  Tensor<T> input;
  TcmWeights<T> weights;
};

/// Either upstream gradient may be empty (treated as zero).
template <typename T>
TcmBranchGrads<T> text_context_branch_backward(const Tensor<T>& s, const TcmWeights<T>& w,
                                               const TcmBranchOutput<T>& fwd,
                                               const Tensor<T>& grad_gtf,
                                               const Tensor<T>& grad_map,
                                               Activation act = Activation::kRelu);

template <typename T>
struct AttentionOutput {
  Tensor<T> probabilities;  // channel_softmax(map)
  Tensor<T> saliency;       // exp(probabilities), values in (1, e)
  Tensor<T> text_scale;     // saliency text channel, (n, 1, h, w)
  Tensor<T> attended;       // s scaled per pixel by text_scale
};

template <typename T>
AttentionOutput<T> pyramid_attention(const Tensor<T>& s, const Tensor<T>& map);

template <typename T>
struct AttentionGrads {
  Tensor<T> input;
  Tensor<T> map;
};

template <typename T>
AttentionGrads<T> pyramid_attention_backward(const Tensor<T>& s, const AttentionOutput<T>& fwd,
                                             const Tensor<T>& grad_attended);

/// attended + gtf; throws ShapeError on mismatch.
template <typename T>
Tensor<T> pyramid_fusion(const Tensor<T>& attended, const Tensor<T>& gtf);

/// Mean of the stage logits after bilinear resizing to (height, width).
template <typename T>
Tensor<T> global_seg_logits(std::span<const Tensor<T>> stage_maps, int height, int width);

template <typename T>
std::vector<Tensor<T>> global_seg_logits_backward(std::span<const Tensor<T>> stage_maps,
                                                  const Tensor<T>& grad_global);

template <typename T>
struct GlobalSegMap {
  Tensor<T> logits;
  Tensor<T> probabilities;
};

template <typename T>
GlobalSegMap<T> global_seg_map(std::span<const Tensor<T>> stage_maps, int height, int width);

/// Mean per-pixel 2-class softmax cross-entropy against `gt`. Pixels set in
/// `exclude` (same size, may be empty) do not enter the mean. The gt raster
/// may be smaller than the logits (padding is labelled non-text).
template <typename T>
LossResult<T> seg_loss(const Tensor<T>& logits, const BinaryMask& gt,
                       const BinaryMask& exclude = {});

/// Composed double-precision operators for the finite-difference suite:
/// "tcm_branch_saliency" (conv-act-conv-act-conv-softmax-exp),
/// "tcm_stage" (full attention + fusion of one stage) and
/// "tcm_seg_loss" (stage logits -> global map -> loss).
const std::vector<RegisteredOperator>& tcm_operator_registry();

}  // namespace ctxdet

#endif  // CTXDET_TCM_HPP_
