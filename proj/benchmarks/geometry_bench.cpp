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

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ctxdet/geometry.hpp"

namespace {

using ctxdet::Point2;
using ctxdet::Polygon;

Polygon random_quad(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(20, 80), r(8, 30), jitter(-0.3, 0.3);
  const Point2 center{c(rng), c(rng)};
  std::vector<Point2> v;
  for (int k = 0; k < 4; ++k) {
    const double t = k * std::numbers::pi / 2 + jitter(rng);
    const double rad = r(rng);
    v.push_back({center.x + rad * std::cos(t), center.y + rad * std::sin(t)});
  }
  return Polygon(std::move(v));
}

void BM_PolygonIou(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::vector<Polygon> polys;
  for (int i = 0; i < 256; ++i) polys.push_back(random_quad(rng));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ctxdet::polygon_iou(polys[i % 256], polys[(i + 1) % 256]));
    ++i;
  }
}
BENCHMARK(BM_PolygonIou);

void BM_PolygonNms(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> score(0, 1);
  std::vector<ctxdet::ScoredPolygon> in;
  for (int i = 0; i < state.range(0); ++i) in.push_back({random_quad(rng), score(rng)});
  for (auto _ : state) benchmark::DoNotOptimize(ctxdet::polygon_nms(in, 0.3));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PolygonNms)->RangeMultiplier(4)->Range(16, 256)->Complexity();

void BM_MinAreaRect(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 100);
  std::vector<Point2> pts;
  for (int i = 0; i < state.range(0); ++i) pts.push_back({u(rng), u(rng)});
  for (auto _ : state) {
    benchmark::DoNotOptimize(ctxdet::min_area_rect(std::span<const Point2>(pts)));
  }
}
BENCHMARK(BM_MinAreaRect)->Arg(16)->Arg(256);

}  // namespace
