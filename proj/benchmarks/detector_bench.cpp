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

#include "ctxdet/detector.hpp"
#include "ctxdet/image.hpp"
#include "ctxdet/inference.hpp"

namespace {

ctxdet::Scene bench_scene() {
  ctxdet::SceneSpec spec;
  spec.seed = 11;
  return ctxdet::generate_scene(spec);
}

void BM_Forward(benchmark::State& state) {
  ctxdet::ModelConfig cfg;
  cfg.tcm = state.range(0) != 0;
  const ctxdet::Detector model(cfg, 1);
  const ctxdet::FeatureMap x = ctxdet::image_to_tensor(bench_scene().image, 32);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
  state.SetLabel(cfg.tcm ? "tcm" : "baseline");
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Detect(benchmark::State& state) {
  const ctxdet::Detector model(ctxdet::ModelConfig{}, 1);
  const ctxdet::Image image = bench_scene().image;
  ctxdet::InferenceConfig cfg;
  cfg.score_threshold = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(ctxdet::detect(model, image, cfg));
}
BENCHMARK(BM_Detect)->Unit(benchmark::kMillisecond);

}  // namespace
