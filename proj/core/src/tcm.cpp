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

#include "ctxdet/tcm.hpp"

#include <random>
#include <stdexcept>

namespace ctxdet {

namespace {

constexpr double kLeakySlope = 0.01;

template <typename T>
std::vector<T> to_vector(const Tensor<T>& t) {
  return std::vector<T>(t.values().begin(), t.values().end());
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu or leaky_relu)");
}

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "leaky_relu";
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  return a == Activation::kRelu ? relu(x) : leaky_relu(x, static_cast<T>(kLeakySlope));
}

template <typename T>
Tensor<T> activate_backward(const Tensor<T>& x, const Tensor<T>& grad_out, Activation a) {
  return a == Activation::kRelu ? relu_backward(x, grad_out)
                                : leaky_relu_backward(x, grad_out, static_cast<T>(kLeakySlope));
}

template <typename T>
TcmBranchOutput<T> text_context_branch(const Tensor<T>& s, const TcmWeights<T>& w,
                                       Activation act) {
  TcmBranchOutput<T> out;
  out.gtf = conv2d<T>(s, w.conv1_w, w.conv1_b, {1, 1});
  out.hidden1 = activate(out.gtf, act);
  out.pre2 = conv2d<T>(out.hidden1, w.conv2_w, w.conv2_b, {1, 1});
  out.hidden2 = activate(out.pre2, act);
  out.map = conv2d<T>(out.hidden2, w.cls_w, w.cls_b, {1, 0});
  return out;
}

template <typename T>
TcmBranchGrads<T> text_context_branch_backward(const Tensor<T>& s, const TcmWeights<T>& w,
                                               const TcmBranchOutput<T>& fwd,
                                               const Tensor<T>& grad_gtf,
                                               const Tensor<T>& grad_map, Activation act) {
  TcmBranchGrads<T> g;
  Tensor<T> d_gtf(fwd.gtf.shape());
  if (!grad_map.empty()) {
    auto cls = conv2d_backward<T>(fwd.hidden2, w.cls_w, grad_map, {1, 0}, true);
    g.weights.cls_w = std::move(cls.kernel);
    g.weights.cls_b = std::move(cls.bias);
    const Tensor<T> d_pre2 = activate_backward(fwd.pre2, cls.input, act);
    auto c2 = conv2d_backward<T>(fwd.hidden1, w.conv2_w, d_pre2, {1, 1}, true);
    g.weights.conv2_w = std::move(c2.kernel);
    g.weights.conv2_b = std::move(c2.bias);
    d_gtf = activate_backward(fwd.gtf, c2.input, act);
  } else {
    g.weights.cls_w = Tensor<T>(w.cls_w.shape());
    g.weights.cls_b.assign(w.cls_b.size(), T{0});
    g.weights.conv2_w = Tensor<T>(w.conv2_w.shape());
    g.weights.conv2_b.assign(w.conv2_b.size(), T{0});
  }
  if (!grad_gtf.empty()) d_gtf += grad_gtf;
  auto c1 = conv2d_backward<T>(s, w.conv1_w, d_gtf, {1, 1}, true);
  g.weights.conv1_w = std::move(c1.kernel);
  g.weights.conv1_b = std::move(c1.bias);
  g.input = std::move(c1.input);
  return g;
}

template <typename T>
AttentionOutput<T> pyramid_attention(const Tensor<T>& s, const Tensor<T>& map) {
  if (map.c() != 2 || map.n() != s.n() || map.h() != s.h() || map.w() != s.w()) {
    throw ShapeError("pyramid_attention: map " + map.shape().to_string() +
                     " is not a 2-channel map aligned with " + s.shape().to_string());
  }
  AttentionOutput<T> out;
  out.probabilities = channel_softmax(map);
  out.saliency = exp_map(out.probabilities);
  out.text_scale = select_channel(out.saliency, kTextChannel);
  out.attended = scale_by_map(s, out.text_scale);
  return out;
}

template <typename T>
AttentionGrads<T> pyramid_attention_backward(const Tensor<T>& s, const AttentionOutput<T>& fwd,
                                             const Tensor<T>& grad_attended) {
  auto sg = scale_by_map_backward(s, fwd.text_scale, grad_attended);
  const Tensor<T> d_sal = select_channel_backward(fwd.saliency.shape(), kTextChannel, sg.scale);
  const Tensor<T> d_prob = exp_map_backward(fwd.saliency, d_sal);
  return {std::move(sg.input), channel_softmax_backward(fwd.probabilities, d_prob)};
}

template <typename T>
Tensor<T> pyramid_fusion(const Tensor<T>& attended, const Tensor<T>& gtf) {
  attended.require_same_shape(gtf, "pyramid_fusion");
  return attended + gtf;
}

template <typename T>
Tensor<T> global_seg_logits(std::span<const Tensor<T>> stage_maps, int height, int width) {
  if (stage_maps.empty()) throw std::invalid_argument("global_seg_logits: no stage maps");
  Tensor<T> acc(stage_maps[0].n(), stage_maps[0].c(), height, width);
  for (const auto& m : stage_maps) {
    if (m.c() != acc.c() || m.n() != acc.n()) {
      throw ShapeError("global_seg_logits: stage map " + m.shape().to_string() +
                       " differs from " + stage_maps[0].shape().to_string());
    }
    acc += bilinear_resize(m, height, width);
  }
  acc *= static_cast<T>(1.0 / static_cast<double>(stage_maps.size()));
  return acc;
}

template <typename T>
std::vector<Tensor<T>> global_seg_logits_backward(std::span<const Tensor<T>> stage_maps,
                                                  const Tensor<T>& grad_global) {
  Tensor<T> scaled = grad_global;
  scaled *= static_cast<T>(1.0 / static_cast<double>(stage_maps.size()));
  std::vector<Tensor<T>> out;
  out.reserve(stage_maps.size());
  for (const auto& m : stage_maps) out.push_back(bilinear_resize_backward(scaled, m.h(), m.w()));
  return out;
}

template <typename T>
GlobalSegMap<T> global_seg_map(std::span<const Tensor<T>> stage_maps, int height, int width) {
  GlobalSegMap<T> g;
  g.logits = global_seg_logits(stage_maps, height, width);
  g.probabilities = channel_softmax(g.logits);
  return g;
}

template <typename T>
LossResult<T> seg_loss(const Tensor<T>& logits, const BinaryMask& gt, const BinaryMask& exclude) {
  if (logits.n() != 1 || logits.c() != 2 || gt.height > logits.h() || gt.width > logits.w()) {
    throw ShapeError("seg_loss: logits " + logits.shape().to_string() +
                     " cannot hold a " + std::to_string(gt.height) + "x" +
                     std::to_string(gt.width) + " target");
  }
  const int h = logits.h();
  const int w = logits.w();
  std::vector<std::uint8_t> labels(std::size_t(h) * w, 0);
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) labels[std::size_t(y) * w + x] = gt.at(y, x);
  }
  std::vector<std::uint8_t> weights;
  if (!exclude.bits.empty()) {
    weights.assign(labels.size(), 1);
    for (int y = 0; y < std::min(exclude.height, h); ++y) {
      for (int x = 0; x < std::min(exclude.width, w); ++x) {
        if (exclude.at(y, x)) weights[std::size_t(y) * w + x] = 0;
      }
    }
  }
  return softmax_cross_entropy_map(logits, labels, weights);
}

#define CTXDET_INSTANTIATE_TCM(T)                                                           \
  template Tensor<T> activate<T>(const Tensor<T>&, Activation);                             \
  template Tensor<T> activate_backward<T>(const Tensor<T>&, const Tensor<T>&, Activation);  \
  template TcmBranchOutput<T> text_context_branch<T>(const Tensor<T>&, const TcmWeights<T>&, \
                                                     Activation);                           \
  template TcmBranchGrads<T> text_context_branch_backward<T>(                               \
      const Tensor<T>&, const TcmWeights<T>&, const TcmBranchOutput<T>&, const Tensor<T>&,  \
      const Tensor<T>&, Activation);                                                        \
  template AttentionOutput<T> pyramid_attention<T>(const Tensor<T>&, const Tensor<T>&);     \
  template AttentionGrads<T> pyramid_attention_backward<T>(                                 \
      const Tensor<T>&, const AttentionOutput<T>&, const Tensor<T>&);                       \
  template Tensor<T> pyramid_fusion<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> global_seg_logits<T>(std::span<const Tensor<T>>, int, int);            \
  template std::vector<Tensor<T>> global_seg_logits_backward<T>(std::span<const Tensor<T>>, \
                                                                const Tensor<T>&);          \
  template GlobalSegMap<T> global_seg_map<T>(std::span<const Tensor<T>>, int, int);         \
  template LossResult<T> seg_loss<T>(const Tensor<T>&, const BinaryMask&, const BinaryMask&);

CTXDET_INSTANTIATE_TCM(float)
CTXDET_INSTANTIATE_TCM(double)

#undef CTXDET_INSTANTIATE_TCM

// ---------------------------------------------------------------------------

namespace {

FeatureMapD gaussian(std::mt19937_64& rng, Shape4 s, double sigma) {
  std::normal_distribution<double> d(0.0, sigma);
  FeatureMapD t(s);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

FeatureMapD as_map(const std::vector<double>& v) {
  FeatureMapD t(1, static_cast<int>(v.size()), 1, 1);
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

// Inputs: s, conv1_w, conv1_b, conv2_w, conv2_b, cls_w, cls_b.
TcmWeights<double> unpack(const DoubleInputs& x) {
  return {x[1], to_vector(x[2]), x[3], to_vector(x[4]), x[5], to_vector(x[6])};
}

DoubleInputs pack_grads(const TcmBranchGrads<double>& g) {
  return {g.input,          g.weights.conv1_w, as_map(g.weights.conv1_b), g.weights.conv2_w,
          as_map(g.weights.conv2_b), g.weights.cls_w, as_map(g.weights.cls_b)};
}

DoubleInputs sample_branch(std::mt19937_64& rng) {
  constexpr int c = 3;
  return {gaussian(rng, {1, c, 5, 6}, 1.0),  gaussian(rng, {c, c, 3, 3}, 0.4),
          gaussian(rng, {1, c, 1, 1}, 0.2),  gaussian(rng, {c, c, 3, 3}, 0.4),
          gaussian(rng, {1, c, 1, 1}, 0.2),  gaussian(rng, {2, c, 1, 1}, 0.6),
          gaussian(rng, {1, 2, 1, 1}, 0.2)};
}

BinaryMask seg_target(int h, int w) {
  BinaryMask m(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.at(y, x) = static_cast<std::uint8_t>((x + 2 * y) % 5 < 2);
  }
  return m;
}

std::vector<RegisteredOperator> build_tcm_registry() {
  std::vector<RegisteredOperator> ops;
  {
    RegisteredOperator op;
    op.name = "tcm_branch_saliency";
    op.forward = [](const DoubleInputs& x) {
      const auto b = text_context_branch(x[0], unpack(x));
      return exp_map(channel_softmax(b.map));
    };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      const auto w = unpack(x);
      const auto b = text_context_branch(x[0], w);
      const FeatureMapD prob = channel_softmax(b.map);
      const FeatureMapD sal = exp_map(prob);
      const FeatureMapD d_map = channel_softmax_backward(prob, exp_map_backward(sal, dy));
      return pack_grads(text_context_branch_backward(x[0], w, b, FeatureMapD{}, d_map));
    };
    op.sample_inputs = sample_branch;
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "tcm_stage";
    op.forward = [](const DoubleInputs& x) {
      const auto b = text_context_branch(x[0], unpack(x));
      return pyramid_fusion(pyramid_attention(x[0], b.map).attended, b.gtf);
    };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      const auto w = unpack(x);
      const auto b = text_context_branch(x[0], w);
      const auto att = pyramid_attention(x[0], b.map);
      const auto ag = pyramid_attention_backward(x[0], att, dy);
      auto g = text_context_branch_backward(x[0], w, b, dy, ag.map);
      g.input += ag.input;
      return pack_grads(g);
    };
    op.sample_inputs = sample_branch;
    ops.push_back(op);
  }
  {
    RegisteredOperator op;
    op.name = "tcm_seg_loss";
    op.forward = [](const DoubleInputs& x) {
      const auto g = global_seg_logits<double>(std::span<const FeatureMapD>(x), 8, 8);
      FeatureMapD out(1, 1, 1, 1);
      out[0] = seg_loss(g, seg_target(8, 8)).loss;
      return out;
    };
    op.backward = [](const DoubleInputs& x, const FeatureMapD& dy) {
      const auto g = global_seg_logits<double>(std::span<const FeatureMapD>(x), 8, 8);
      FeatureMapD d = seg_loss(g, seg_target(8, 8)).grad;
      d *= dy[0];
      return global_seg_logits_backward<double>(std::span<const FeatureMapD>(x), d);
    };
    op.sample_inputs = [](std::mt19937_64& rng) {
      return DoubleInputs{gaussian(rng, {1, 2, 4, 4}, 1.0), gaussian(rng, {1, 2, 2, 2}, 1.0),
                          gaussian(rng, {1, 2, 8, 8}, 1.0)};
    };
    ops.push_back(op);
  }
  return ops;
}

}  // namespace

const std::vector<RegisteredOperator>& tcm_operator_registry() {
  static const std::vector<RegisteredOperator> registry = build_tcm_registry();
  return registry;
}

}  // namespace ctxdet
