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

// Differentiable operators. Every forward function has a matching backward
// function taking the upstream gradient; all are explicitly instantiated for
// float (training) and double (verification).

#ifndef CTXDET_NETOPS_HPP_
#define CTXDET_NETOPS_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctxdet/geometry.hpp"
#include "ctxdet/tensor.hpp"

namespace ctxdet {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

/// Output extent of a convolution along one axis.
int conv_output_size(int in, int kernel, ConvGeometry g);

/// Cross-correlation. kernel is (out_ch, in_ch, kh, kw); bias is empty or
/// out_ch long.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 std::span<const T> bias, ConvGeometry g);

template <typename T>
struct ConvGrads {
  Tensor<T> input;   // empty when not requested
  Tensor<T> kernel;
  std::vector<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                             const Tensor<T>& grad_out, ConvGeometry g,
                             bool want_input_grad = true);

/// Fully connected layer over (n, k, 1, 1) inputs; weight is (out, k, 1, 1).
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight,
                 std::span<const T> bias);

template <typename T>
ConvGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out,
                              T slope);

/// Per-pixel softmax across channels (max-subtracted).
template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& x);
/// Takes the softmax output y, not its input.
template <typename T>
Tensor<T> channel_softmax_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> exp_map(const Tensor<T>& x);
/// Takes the exp output y.
template <typename T>
Tensor<T> exp_map_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

/// Copies one channel out as a (n, 1, h, w) map.
template <typename T>
Tensor<T> select_channel(const Tensor<T>& x, int channel);
template <typename T>
Tensor<T> select_channel_backward(const Shape4& input_shape, int channel,
                                  const Tensor<T>& grad_out);

/// y[b,c,i,j] = x[b,c,i,j] * scale[b,0,i,j]
template <typename T>
Tensor<T> scale_by_map(const Tensor<T>& x, const Tensor<T>& scale);

template <typename T>
struct ScaleGrads {
  Tensor<T> input;
  Tensor<T> scale;
};
template <typename T>
ScaleGrads<T> scale_by_map_backward(const Tensor<T>& x, const Tensor<T>& scale,
                                    const Tensor<T>& grad_out);

/// Half-pixel (align-corners-false) bilinear interpolation.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w);
template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_out, int in_h, int in_w);

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& grad_out);

struct RoiAlignParams {
  double spatial_scale = 1.0;  // 1 / stride
  int out_h = 7;
  int out_w = 7;
  int sampling = 2;  // samples per bin along each axis
};

/// Pools one image-space box from batch item 0 of `input` to a
/// (1, c, out_h, out_w) grid. Throws when the box lies fully outside.
template <typename T>
Tensor<T> roi_align(const Tensor<T>& input, const AxisRect& roi,
                    const RoiAlignParams& p);
/// Adds the gradient of roi_align into `grad_input` (same shape as input).
template <typename T>
void roi_align_backward(const Tensor<T>& grad_out, const AxisRect& roi,
                        const RoiAlignParams& p, Tensor<T>& grad_input);

// ---------------------------------------------------------------------------
// Losses. Each returns the scalar loss and the gradient w.r.t. its logits.

template <typename T>
struct LossResult {
  T loss{};
  Tensor<T> grad;
};

/// Two-class (or C-class) per-pixel softmax cross-entropy averaged over the
/// pixels whose weight is nonzero. labels/weights are h*w long.
template <typename T>
LossResult<T> softmax_cross_entropy_map(const Tensor<T>& logits,
                                        std::span<const std::uint8_t> labels,
                                        std::span<const std::uint8_t> weights);

/// Row-wise softmax cross-entropy over (n, classes, 1, 1) logits, mean over n.
template <typename T>
LossResult<T> softmax_cross_entropy_rows(const Tensor<T>& logits,
                                         std::span<const int> labels);

/// Binary cross-entropy on logits, averaged over all entries.
template <typename T>
LossResult<T> sigmoid_bce(const Tensor<T>& logits, std::span<const T> targets);

/// Smooth-L1 summed over entries and divided by `normalizer`.
template <typename T>
LossResult<T> smooth_l1(const Tensor<T>& pred, std::span<const T> target,
                        T beta, T normalizer);

// ---------------------------------------------------------------------------
// Gradient verification.

using DoubleInputs = std::vector<FeatureMapD>;

/// One differentiable operator exposed to the finite-difference harness.
struct RegisteredOperator {
  std::string name;
  std::function<FeatureMapD(const DoubleInputs&)> forward;
  /// Gradients w.r.t. every input given the upstream gradient.
  std::function<DoubleInputs(const DoubleInputs&, const FeatureMapD&)> backward;
  /// Draws an input point away from non-differentiable kinks.
  std::function<DoubleInputs(std::mt19937_64&)> sample_inputs;
};

const std::vector<RegisteredOperator>& operator_registry();
const RegisteredOperator& find_operator(const std::string& name);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

/// Central finite differences (step 1e-5) of <r, f(x)> for a random fixed r,
/// compared coordinate-wise to the analytic gradient. The relative error of a
/// coordinate is |a - n| / max(|a|, |n|, 1).
GradCheckReport grad_check(const RegisteredOperator& op, const DoubleInputs& point,
                           double tolerance, std::uint64_t projection_seed = 7,
                           double step = 1e-5);

}  // namespace ctxdet

#endif  // CTXDET_NETOPS_HPP_
