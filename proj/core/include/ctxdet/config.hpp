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

// Run configuration as "key = value" text. Lines starting with '#' and blank
// lines are skipped; lists and ranges are comma separated.

#ifndef CTXDET_CONFIG_HPP_
#define CTXDET_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxdet/dataio.hpp"
#include "ctxdet/detector.hpp"
#include "ctxdet/inference.hpp"
#include "ctxdet/trainer.hpp"

namespace ctxdet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::filesystem::path dir = "data";
  std::size_t train_count = 500;
  std::size_t test_count = 100;
  std::uint64_t train_seed = 1000;
  std::uint64_t test_seed = 900000;
  int min_side = 96;
  int max_side = 128;

  std::filesystem::path train_manifest() const { return dir / "train" / "manifest.tsv"; }
  std::filesystem::path test_manifest() const { return dir / "test" / "manifest.tsv"; }
};

struct EvalConfig {
  double iou_threshold = 0.5;
};

struct AblateConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  // Optional precomputed checkpoints, one per seed, "{seed}" is substituted.
  std::string baseline_checkpoint;
  std::string tcm_checkpoint;
};

struct RunConfig {
  SceneSpec scene;
  DataConfig data;
  TrainConfig train;
  ModelConfig model;
  InferenceConfig inference;
  EvalConfig eval;
  AblateConfig ablate;

  /// Throws ConfigError with the first violated constraint.
  void validate() const;
};

/// Applies the lines of `text` on top of `base`. Unknown keys, malformed
/// values and duplicate keys throw ConfigError naming `source`, the line and
/// the key.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>",
                           RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key with its current value; parse_run_config(format_run_config(c))
/// reproduces c.
std::string format_run_config(const RunConfig& config);

/// The "model.*" subset, canonical order. Hashed into checkpoints.
std::string model_config_text(const ModelConfig& config);
ModelConfig parse_model_config_text(const std::string& text);

}  // namespace ctxdet

#endif  // CTXDET_CONFIG_HPP_
