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

#include "ctxdet/geometry.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "oracles.hpp"

namespace ctxdet {
namespace {

Polygon square(double x, double y, double s) {
  return Polygon({{x, y}, {x + s, y}, {x + s, y + s}, {x, y + s}});
}

TEST(PolygonTest, RejectsDegenerateInput) {
  EXPECT_THROW(Polygon({{0, 0}, {1, 1}}), GeometryError);
  EXPECT_THROW(Polygon({{0, 0}, {1, 1}, {2, 2}}), GeometryError);
  EXPECT_THROW(Polygon({{0, 0}, {2, 2}, {2, 0}, {0, 2}}), GeometryError);  // bow tie
  EXPECT_THROW(Polygon({{0, 0}, {NAN, 1}, {1, 0}}), GeometryError);
}

TEST(PolygonTest, NormalizesOrientation) {
  const Polygon cw({{0, 0}, {0, 1}, {1, 1}, {1, 0}});
  EXPECT_TRUE(cw.was_reversed());
  EXPECT_GT(signed_area(cw.vertices()), 0.0);
  const Polygon ccw({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  EXPECT_FALSE(ccw.was_reversed());
  EXPECT_DOUBLE_EQ(polygon_area(ccw), 1.0);
}

TEST(PolygonIouTest, BasicCases) {
  EXPECT_DOUBLE_EQ(polygon_iou(square(0, 0, 10), square(0, 0, 10)), 1.0);
  EXPECT_DOUBLE_EQ(polygon_iou(square(0, 0, 10), square(20, 20, 10)), 0.0);
  // Half-shifted squares: intersection 50, union 150.
  EXPECT_NEAR(polygon_iou(square(0, 0, 10), square(5, 0, 10)), 1.0 / 3.0, 1e-12);
}

TEST(PolygonIouTest, ConcaveIntersection) {
  // L shape of area 3 against the unit square it contains.
  const Polygon l({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}});
  EXPECT_NEAR(intersection_area(l, square(0, 0, 1)), 1.0, 1e-12);
  EXPECT_NEAR(intersection_area(l, square(1, 1, 1)), 0.0, 1e-12);
  EXPECT_NEAR(polygon_iou(l, square(0, 0, 2)), 3.0 / 4.0, 1e-12);
}

TEST(PolygonIouTest, SymmetricBoundedAndMatchesRaster) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 40; ++t) {
    const auto a = oracle::random_convex_quad(rng);
    const auto b = oracle::random_convex_quad(rng);
    const double ab = polygon_iou(Polygon(a), Polygon(b));
    const double ba = polygon_iou(Polygon(b), Polygon(a));
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(ab, oracle::raster_iou(a, b, 100.0, 400), 0.02);
  }
}

TEST(MinAreaRectTest, AxisAlignedRectangle) {
  const RotatedRect r = min_area_rect(Polygon({{2, 3}, {12, 3}, {12, 7}, {2, 7}}));
  EXPECT_NEAR(r.area(), 40.0, 1e-9);
  EXPECT_NEAR(r.width, 10.0, 1e-9);
  EXPECT_NEAR(r.height, 4.0, 1e-9);
  EXPECT_NEAR(r.center.x, 7.0, 1e-9);
  EXPECT_NEAR(r.center.y, 5.0, 1e-9);
  EXPECT_GE(r.angle, -90.0);
  EXPECT_LT(r.angle, 90.0);
}

TEST(MinAreaRectTest, RotatedSquareRecoversAngle) {
  const double c = std::cos(M_PI / 6), s = std::sin(M_PI / 6);
  std::vector<Point2> pts;
  for (auto [u, v] : {std::pair{-4.0, -1.0}, {4.0, -1.0}, {4.0, 1.0}, {-4.0, 1.0}}) {
    pts.push_back({50 + c * u - s * v, 50 + s * u + c * v});
  }
  const RotatedRect r = min_area_rect(std::span<const Point2>(pts));
  EXPECT_NEAR(r.area(), 16.0, 1e-9);
  EXPECT_NEAR(r.angle, 30.0, 1e-6);
  EXPECT_GE(r.width, r.height);
}

TEST(MinAreaRectTest, EnclosesEveryPointAndBeatsSweep) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 50);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Point2> pts;
    for (int i = 0; i < 12; ++i) pts.push_back({u(rng), u(rng)});
    const RotatedRect r = min_area_rect(std::span<const Point2>(pts));
    const double t = r.angle * std::numbers::pi / 180.0;
    const Point2 axis_u{std::cos(t), std::sin(t)};
    const Point2 axis_v{-std::sin(t), std::cos(t)};
    for (const Point2& p : pts) {
      EXPECT_LE(std::abs(dot(p - r.center, axis_u)), r.width / 2 + 1e-7);
      EXPECT_LE(std::abs(dot(p - r.center, axis_v)), r.height / 2 + 1e-7);
    }
    EXPECT_LE(r.area(), oracle::angle_sweep_min_area(pts, 1.0) + 1e-9);
  }
}

TEST(PolygonNmsTest, KeepsHighestAndDropsOverlaps) {
  std::vector<ScoredPolygon> in{{square(0, 0, 10), 0.5},
                                {square(1, 0, 10), 0.9},
                                {square(40, 40, 10), 0.1}};
  const auto keep = polygon_nms(in, 0.3);
  ASSERT_EQ(keep.size(), 2u);
  EXPECT_EQ(keep[0], 1u);
  EXPECT_EQ(keep[1], 2u);
}

TEST(PolygonNmsTest, TiesResolvedByLowerIndexAndThresholdIsStrict) {
  std::vector<ScoredPolygon> in{{square(0, 0, 10), 0.7}, {square(5, 0, 10), 0.7}};
  // IoU is exactly 1/3; only values strictly above the threshold suppress.
  EXPECT_EQ(polygon_nms(in, 1.0 / 3.0).size(), 2u);
  const auto keep = polygon_nms(in, 0.3);
  ASSERT_EQ(keep.size(), 1u);
  EXPECT_EQ(keep[0], 0u);
}

TEST(PolygonNmsTest, KeptSetIsPairwiseBelowThreshold) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<ScoredPolygon> in;
    std::uniform_real_distribution<double> score(0, 1);
    for (int i = 0; i < 15; ++i) in.push_back({Polygon(oracle::random_convex_quad(rng)), score(rng)});
    const auto keep = polygon_nms(in, 0.4);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      for (std::size_t j = i + 1; j < keep.size(); ++j) {
        EXPECT_LE(polygon_iou(in[keep[i]].polygon, in[keep[j]].polygon), 0.4);
      }
      if (i > 0) EXPECT_GE(in[keep[i - 1]].score, in[keep[i]].score);
    }
  }
}

TEST(RasterizeTest, PixelCentersRule) {
  const BinaryMask m = rasterize(Polygon({{1, 1}, {4, 1}, {4, 3}, {1, 3}}), 5, 6);
  EXPECT_EQ(m.count(), 6u);
  EXPECT_EQ(m.at(1, 1), 1);
  EXPECT_EQ(m.at(2, 3), 1);
  EXPECT_EQ(m.at(0, 0), 0);
  EXPECT_EQ(m.at(3, 1), 0);
  EXPECT_THROW(rasterize(square(0, 0, 1), 0, 3), GeometryError);
}

TEST(RasterizeTest, AreaApproximatesPolygonArea) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 10; ++t) {
    const Polygon p(oracle::random_convex_quad(rng, 200.0));
    const double count = double(rasterize(p, 200, 200).count());
    EXPECT_NEAR(count / polygon_area(p), 1.0, 0.05);
  }
}

TEST(LargestComponentTest, PicksBiggestFourConnectedBlob) {
  BinaryMask m(6, 6);
  m.at(0, 0) = 1;
  m.at(1, 1) = 1;  // diagonal neighbour only: separate component
  for (int x = 2; x < 6; ++x) m.at(4, x) = 1;
  const BinaryMask c = largest_component(m);
  EXPECT_EQ(c.count(), 4u);
  EXPECT_EQ(c.at(4, 2), 1);
  EXPECT_EQ(c.at(0, 0), 0);
}

TEST(MaskMinAreaRectTest, CoversPixelSquares) {
  BinaryMask m(10, 10);
  for (int y = 2; y < 5; ++y) {
    for (int x = 1; x < 8; ++x) m.at(y, x) = 1;
  }
  const RotatedRect r = mask_min_area_rect(m);
  EXPECT_NEAR(r.area(), 21.0, 1e-9);
  EXPECT_NEAR(r.center.x, 4.5, 1e-9);
  EXPECT_NEAR(r.center.y, 3.5, 1e-9);
  EXPECT_THROW(mask_min_area_rect(BinaryMask(3, 3)), GeometryError);
}

TEST(BoxIouTest, Values) {
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 2, 2}, {1, 0, 3, 2}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(box_iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
  EXPECT_THROW(AxisRect::checked(1, 0, 1, 2), GeometryError);
}

TEST(ConvexHullTest, DropsInteriorAndCollinearPoints) {
  const auto h = convex_hull({{0, 0}, {2, 0}, {1, 0}, {2, 2}, {0, 2}, {1, 1}});
  EXPECT_EQ(h.size(), 4u);
  EXPECT_GT(signed_area(h), 0.0);
}

}  // namespace
}  // namespace ctxdet
