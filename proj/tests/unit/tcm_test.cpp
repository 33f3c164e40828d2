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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"

namespace ctxdet {
namespace {

FeatureMapD random_map(Shape4 s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0, scale);
  FeatureMapD t(s);
  for (double& v : t.values()) v = n(rng);
  return t;
}

TcmWeights<double> random_weights(int c, std::mt19937_64& rng) {
  TcmWeights<double> w;
  w.conv1_w = random_map({c, c, 3, 3}, rng, 0.3);
  w.conv1_b.assign(c, 0.05);
  w.conv2_w = random_map({c, c, 3, 3}, rng, 0.3);
  w.conv2_b.assign(c, -0.05);
  w.cls_w = random_map({2, c, 1, 1}, rng, 0.3);
  w.cls_b = {0.1, -0.1};
  return w;
}

TEST(TextContextBranchTest, ShapesAndPreActivationFeature) {
  std::mt19937_64 rng(1);
  const FeatureMapD s = random_map({1, 4, 6, 5}, rng);
  const auto w = random_weights(4, rng);
  const auto out = text_context_branch(s, w);
  EXPECT_EQ(out.gtf.shape(), s.shape());
  EXPECT_EQ(out.map.shape(), (Shape4{1, 2, 6, 5}));
  // The global text feature is the first conv output before the activation.
  bool any_negative = false;
  for (double v : out.gtf.values()) any_negative = any_negative || v < 0;
  EXPECT_TRUE(any_negative);
  for (double v : out.hidden1.values()) EXPECT_GE(v, 0.0);
}

TEST(PyramidAttentionTest, SaliencyStrictlyInsideOneToE) {
  std::mt19937_64 rng(2);
  const FeatureMapD s = random_map({1, 3, 7, 7}, rng);
  // Logit gaps beyond ~37 round the softmax to exactly 0 or 1 in double.
  const FeatureMapD map = random_map({1, 2, 7, 7}, rng, 6.0);
  const auto a = pyramid_attention(s, map);
  for (double v : a.saliency.values()) {
    EXPECT_GT(v, 1.0);
    EXPECT_LT(v, std::numbers::e);
  }
}

TEST(PyramidAttentionTest, RatioEqualsSaliency) {
  std::mt19937_64 rng(3);
  const FeatureMapD s = random_map({1, 3, 4, 4}, rng);
  const FeatureMapD map = random_map({1, 2, 4, 4}, rng);
  const auto a = pyramid_attention(s, map);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        const double ratio = a.attended.at(0, c, y, x) / s.at(0, c, y, x);
        EXPECT_NEAR(ratio, a.saliency.at(0, kTextChannel, y, x), 1e-14);
        EXPECT_EQ(a.text_scale.at(0, 0, y, x), a.saliency.at(0, kTextChannel, y, x));
      }
}

TEST(PyramidAttentionTest, UniformLogitsGiveSqrtE) {
  FeatureMapD s(1, 2, 3, 3, 1.0);
  FeatureMapD map(1, 2, 3, 3, 0.4);
  const auto a = pyramid_attention(s, map);
  for (double v : a.text_scale.values()) EXPECT_NEAR(v, std::exp(0.5), 1e-12);
}

TEST(PyramidAttentionTest, MisalignedMapThrows) {
  FeatureMapD s(1, 2, 3, 3);
  EXPECT_THROW(pyramid_attention(s, FeatureMapD(1, 2, 4, 3)), ShapeError);
  EXPECT_THROW(pyramid_attention(s, FeatureMapD(1, 3, 3, 3)), ShapeError);
}

TEST(PyramidFusionTest, AddsElementwise) {
  FeatureMapD a(1, 1, 1, 2, 1.0);
  FeatureMapD b(1, 1, 1, 2, 2.5);
  const auto f = pyramid_fusion(a, b);
  EXPECT_EQ(f[0], 3.5);
  EXPECT_THROW(pyramid_fusion(a, FeatureMapD(1, 1, 2, 1)), ShapeError);
}

TEST(GlobalSegMapTest, MeanOfResizedStageLogits) {
  std::mt19937_64 rng(4);
  std::vector<FeatureMapD> maps{random_map({1, 2, 8, 8}, rng), random_map({1, 2, 4, 4}, rng)};
  const auto g = global_seg_logits<double>(maps, 8, 8);
  const auto up = bilinear_resize(maps[1], 8, 8);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g[i], 0.5 * (maps[0][i] + up[i]), 1e-14);
  }
  const auto m = global_seg_map<double>(maps, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_NEAR(m.probabilities.at(0, 0, y, x) + m.probabilities.at(0, 1, y, x), 1.0, 1e-15);
    }
}

TEST(SegLossTest, MatchesNaiveLoopWithPaddingAndExclusion) {
  std::mt19937_64 rng(5);
  const FeatureMapD logits = random_map({1, 2, 8, 10}, rng, 3.0);
  BinaryMask gt(6, 7);
  BinaryMask exclude(6, 7);
  std::bernoulli_distribution coin(0.4);
  for (auto& b : gt.bits) b = coin(rng);
  exclude.at(2, 3) = 1;
  exclude.at(5, 6) = 1;
  std::vector<std::uint8_t> labels(80, 0), keep(80, 1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x) {
      labels[y * 10 + x] = gt.at(y, x);
      keep[y * 10 + x] = !exclude.at(y, x);
    }
  EXPECT_NEAR(seg_loss(logits, gt, exclude).loss, oracle::naive_ce(logits, labels, keep), 1e-12);
  std::vector<std::uint8_t> all(80, 1);
  EXPECT_NEAR(seg_loss(logits, gt).loss, oracle::naive_ce(logits, labels, all), 1e-12);
}

TEST(ActivationTest, ParseNames) {
  EXPECT_EQ(parse_activation("relu"), Activation::kRelu);
  EXPECT_EQ(parse_activation(activation_name(Activation::kLeakyRelu)), Activation::kLeakyRelu);
  EXPECT_THROW(parse_activation("gelu"), std::invalid_argument);
}

class TcmGradTest : public ::testing::TestWithParam<std::string> {};

TEST_P(TcmGradTest, FiniteDifferencesAgree) {
  for (const auto& op : tcm_operator_registry()) {
    if (op.name != GetParam()) continue;
    for (std::uint64_t seed : {1u, 2u}) {
      std::mt19937_64 rng(seed);
      const auto r = grad_check(op, op.sample_inputs(rng), 1e-4, seed);
      EXPECT_TRUE(r.passed) << op.name << " seed " << seed << " err " << r.max_rel_error;
    }
    return;
  }
  FAIL() << "operator not registered";
}

INSTANTIATE_TEST_SUITE_P(Composed, TcmGradTest,
                         ::testing::Values("tcm_branch_saliency", "tcm_stage", "tcm_seg_loss"));

}  // namespace
}  // namespace ctxdet
