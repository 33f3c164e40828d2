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

#ifndef CTXDET_TOOLS_CLI_HPP_
#define CTXDET_TOOLS_CLI_HPP_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "ctxdet/config.hpp"
#include "ctxdet/evaluator.hpp"

namespace ctxdet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitInternal = 2;

struct RunManifest {
  std::string command;
  std::filesystem::path config_path;  // empty when defaults were used
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

/// Header comment lines followed by the fully resolved config, so the file
/// can be passed back through --config.
std::string format_run_manifest(const RunManifest& manifest, const RunConfig& config);
void write_run_manifest(const RunManifest& manifest, const RunConfig& config);

/// Generates data.train_count / data.test_count scenes into
/// `dir`/train and `dir`/test.
void synthesize(const RunConfig& config, const std::filesystem::path& dir, std::ostream& log);

struct EvalRun {
  EvalReport report;
  std::vector<std::string> names;
  std::vector<std::vector<TextInstance>> detections;
};

/// Detects on every sample and scores against its annotations.
EvalRun evaluate_model(const Detector& model, const std::vector<Sample>& samples,
                       const InferenceConfig& inference, bool rescore, double iou_threshold);

/// Trains (or loads) Baseline and +TCM for every seed, evaluates Baseline,
/// +TCM and +TCM+RS on the test split and writes ablation.txt / ablation.kv
/// into `out`.
AblationTable run_ablation(const RunConfig& config, const std::filesystem::path& out,
                           std::ostream& log);

/// Entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctxdet::cli

#endif  // CTXDET_TOOLS_CLI_HPP_
