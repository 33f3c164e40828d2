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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctxdet/image.hpp"

namespace ctxdet {
namespace {

double grad_norm(const Parameter& p) {
  double s = 0;
  for (float g : p.grad.values()) s += double(g) * g;
  return std::sqrt(s);
}

TEST(AnchorTest, AreaRatioAndCenters) {
  const std::vector<double> ratios{0.5, 1.0, 2.0};
  const auto a = generate_anchors(2, 3, 8, 16.0, ratios);
  ASSERT_EQ(a.size(), 18u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].w * a[i].h, 256.0, 1e-9);
    EXPECT_NEAR(a[i].w / a[i].h, ratios[i % 3], 1e-12);
  }
  EXPECT_DOUBLE_EQ(a[0].cx, 4.0);
  EXPECT_DOUBLE_EQ(a[3].cx, 12.0);
  EXPECT_DOUBLE_EQ(a[9].cy, 12.0);
}

TEST(BoxCodingTest, EncodeDecodeRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100), s(2, 60);
  for (int t = 0; t < 100; ++t) {
    const double x = u(rng), y = u(rng);
    const AxisRect box{x, y, x + s(rng), y + s(rng)};
    const AxisRect anchor{y, x, y + s(rng), x + s(rng)};
    const AxisRect back = decode_box(encode_box(box, anchor), anchor);
    EXPECT_NEAR(back.x_min, box.x_min, 1e-9);
    EXPECT_NEAR(back.y_max, box.y_max, 1e-9);
  }
  EXPECT_THROW(encode_box({0, 0, 0, 1}, {0, 0, 1, 1}), GeometryError);
}

TEST(BoxCodingTest, DecodeClampsScale) {
  const AxisRect a{0, 0, 10, 10};
  const AxisRect b = decode_box({0, 0, 50, 50}, a);
  EXPECT_NEAR(b.width(), 10 * 1000.0 / 16.0, 1e-6);
  EXPECT_TRUE(std::isfinite(b.x_max));
}

TEST(BoxNmsTest, GreedyOrder) {
  const std::vector<AxisRect> boxes{{0, 0, 10, 10}, {1, 1, 11, 11}, {30, 30, 40, 40}};
  const std::vector<double> scores{0.8, 0.9, 0.8};
  const auto keep = box_nms(boxes, scores, 0.5);
  ASSERT_EQ(keep.size(), 2u);
  EXPECT_EQ(keep[0], 1u);
  EXPECT_EQ(keep[1], 2u);
}

TEST(FpnLevelTest, CanonicalMapping) {
  EXPECT_EQ(fpn_level({0, 0, 64, 64}, 4, 64), 4);
  EXPECT_EQ(fpn_level({0, 0, 32, 32}, 4, 64), 3);
  EXPECT_EQ(fpn_level({0, 0, 8, 8}, 4, 64), 2);
  EXPECT_EQ(fpn_level({0, 0, 500, 500}, 4, 64), 5);
  EXPECT_EQ(fpn_level({0, 0, 224, 224}, 4, 224), 4);
}

TEST(RpnTargetTest, PositivesNegativesAndBestAnchorRule) {
  const std::vector<AxisRect> anchors{{0, 0, 10, 10}, {0, 0, 9, 10}, {50, 50, 60, 60},
                                      {20, 0, 30, 10}};
  const std::vector<AxisRect> gt{{0, 0, 10, 10}, {22, 0, 34, 12}};
  const RpnTargets t = assign_rpn_targets(anchors, gt, RpnParams{});
  EXPECT_EQ(t.labels[0], AnchorLabel::kPositive);
  EXPECT_EQ(t.labels[1], AnchorLabel::kPositive);  // IoU 0.9
  EXPECT_EQ(t.labels[2], AnchorLabel::kNegative);
  // IoU(anchor 3, gt 1) = 80/164 < 0.7, but no other anchor overlaps that GT.
  EXPECT_EQ(t.labels[3], AnchorLabel::kPositive);
  EXPECT_EQ(t.matched_gt[3], 1);
  EXPECT_NEAR(t.deltas[0][2], 0.0, 1e-12);
}

TEST(RpnTargetTest, IgnoreBoxesSuppressNegatives) {
  const std::vector<AxisRect> anchors{{50, 50, 60, 60}};
  const std::vector<AxisRect> gt{{0, 0, 10, 10}};
  const std::vector<AxisRect> ignore{{50, 50, 60, 60}};
  EXPECT_EQ(assign_rpn_targets(anchors, gt, RpnParams{}, ignore).labels[0], AnchorLabel::kIgnore);
}

TEST(ModelConfigTest, ValidateNamesField) {
  ModelConfig c;
  c.anchor_ratios.clear();
  try {
    c.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("anchor_ratios"), std::string::npos);
  }
}

class DetectorTest : public ::testing::Test {
 protected:
  static FeatureMap random_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1, 1);
    FeatureMap t(1, 3, h, w);
    for (float& v : t.values()) v = u(rng);
    return t;
  }
};

TEST_F(DetectorTest, ParameterBudget) {
  ModelConfig c;
  EXPECT_LE(Detector(c, 1).parameters().scalar_count(), 200000u);
  c.tcm = false;
  const Detector base(c, 1);
  for (const Parameter& p : base.parameters().all()) {
    EXPECT_EQ(p.name.find("tcm"), std::string::npos) << p.name;
  }
}

TEST_F(DetectorTest, SharedLayersInitializeIdenticallyWithAndWithoutTcm) {
  ModelConfig on;
  ModelConfig off = on;
  off.tcm = false;
  const Detector a(on, 9);
  const Detector b(off, 9);
  std::size_t shared = 0;
  for (const Parameter& p : b.parameters().all()) {
    const Parameter* q = a.parameters().find(p.name);
    ASSERT_NE(q, nullptr) << p.name;
    ASSERT_EQ(q->value.shape(), p.value.shape());
    EXPECT_TRUE(std::equal(p.value.values().begin(), p.value.values().end(),
                           q->value.values().begin()))
        << p.name;
    ++shared;
  }
  EXPECT_LT(shared, a.parameters().all().size());
}

TEST_F(DetectorTest, ForwardShapes) {
  const Detector d(ModelConfig{}, 3);
  const ForwardPass f = d.forward(random_image(96, 128, 1));
  for (int k = 0; k < kPyramidLevels; ++k) {
    const int stride = level_stride(k + kMinLevel);
    EXPECT_EQ(f.fused.stages[k].shape(), (Shape4{1, 32, 96 / stride, 128 / stride}));
    EXPECT_EQ(f.tcm[k].branch.map.c(), 2);
  }
  EXPECT_EQ(f.anchors.size(), f.anchor_offsets.back());
  const auto seg = d.seg_map(f);
  EXPECT_EQ(seg.probabilities.shape(), (Shape4{1, 2, 96, 128}));
  EXPECT_THROW(d.forward(random_image(90, 128, 1)), ShapeError);
}

TEST_F(DetectorTest, ProposalsAreClippedAndBounded) {
  const Detector d(ModelConfig{}, 3);
  const ForwardPass f = d.forward(random_image(128, 128, 2));
  RpnParams p;
  p.post_nms_top_m = 50;
  const auto props = d.propose(f, 120, 110, p);
  EXPECT_LE(props.size(), 50u);
  EXPECT_FALSE(props.empty());
  for (const Proposal& q : props) {
    EXPECT_GE(q.box.x_min, 0);
    EXPECT_LE(q.box.x_max, 110);
    EXPECT_LE(q.box.y_max, 120);
    EXPECT_GT(q.objectness, 0);
    EXPECT_LT(q.objectness, 1);
  }
  const auto heads = d.box_head(f, std::vector<AxisRect>{props.front().box});
  EXPECT_EQ(heads.cls_logits.shape(), (Shape4{1, 2, 1, 1}));
  EXPECT_EQ(d.mask_head(f, std::vector<AxisRect>{props.front().box}).shape(),
            (Shape4{1, 1, 14, 14}));
}

TEST_F(DetectorTest, BaselineHasNoSegMap) {
  ModelConfig c;
  c.tcm = false;
  const Detector d(c, 1);
  const ForwardPass f = d.forward(random_image(64, 64, 1));
  EXPECT_THROW(d.seg_map(f), std::logic_error);
}

TEST_F(DetectorTest, TrainStepReachesTcmAndRpnParameters) {
  Detector d(ModelConfig{}, 4);
  const auto anns = std::vector<Annotation>{parse_annotation_line("20,30,80,30,80,50,20,50,word"),
                                            parse_annotation_line("10,70,50,70,50,90,10,90,x")};
  const GroundTruth gt = make_ground_truth(anns, 96, 96);
  std::mt19937_64 rng(1);
  d.parameters().zero_grad();
  const LossComponents l = d.train_step(random_image(96, 96, 5), gt, TrainStepOptions{}, rng);
  for (double v : {l.rpn, l.cls, l.box, l.mask, l.gts}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
  EXPECT_GT(l.gts, 0.0);
  double tcm = 0, rpn = 0;
  for (const Parameter& p : d.parameters().all()) {
    if (p.name.rfind("tcm", 0) == 0) tcm += grad_norm(p);
    if (p.name.rfind("rpn", 0) == 0) rpn += grad_norm(p);
  }
  EXPECT_GT(tcm, 0.0);
  EXPECT_GT(rpn, 0.0);
}

TEST_F(DetectorTest, TrainStepIsDeterministic) {
  const auto anns = std::vector<Annotation>{parse_annotation_line("20,30,80,30,80,50,20,50,w")};
  const GroundTruth gt = make_ground_truth(anns, 64, 96);
  const FeatureMap img = random_image(64, 96, 6);
  auto run = [&] {
    Detector d(ModelConfig{}, 8);
    std::mt19937_64 rng(3);
    d.parameters().zero_grad();
    const LossComponents l = d.train_step(img, gt, TrainStepOptions{}, rng);
    std::vector<float> g;
    for (const Parameter& p : d.parameters().all()) {
      g.insert(g.end(), p.grad.values().begin(), p.grad.values().end());
    }
    return std::pair{l.rpn + l.cls + l.box + l.mask + l.gts, g};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

}  // namespace
}  // namespace ctxdet
