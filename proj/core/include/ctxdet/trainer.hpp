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

#ifndef CTXDET_TRAINER_HPP_
#define CTXDET_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxdet/dataio.hpp"
#include "ctxdet/detector.hpp"

namespace ctxdet {

enum class WeightDecayMode { kDecoupled, kL2 };

struct TrainConfig {
  // Loss weights: L = L_rpn + l1 L_cls + l2 L_box + l3 L_mask + l4 L_gts.
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double lambda4 = 1.0;
  double base_lr = 2e-3;
  int max_iter = 2000;
  int epochs = 0;  // when > 0, max_iter = epochs * ceil(dataset / batch)
  double power = 0.9;
  int batch_size = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  WeightDecayMode weight_decay_mode = WeightDecayMode::kDecoupled;
  std::vector<int> scales{96, 112, 128};
  double flip_probability = 0.5;
  std::uint64_t seed = 1;
  int log_interval = 20;
  int checkpoint_interval = 500;  // 0 disables periodic checkpoints
  SegIgnoreMode seg_ignore = SegIgnoreMode::kBackground;
  RpnParams rpn;
  RoiParams roi;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  int resolved_max_iter(std::size_t dataset_size) const;
  LossWeights loss_weights() const { return {lambda1, lambda2, lambda3, lambda4}; }
};

/// A loss term became NaN or infinite.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, double value);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// Weighted sum of the five loss terms. Throws NonFiniteLoss naming the first
/// non-finite term.
double total_loss(const LossComponents& l, const TrainConfig& config);

/// base * (1 - iteration / max_iter)^power; throws std::out_of_range outside
/// [0, max_iter].
double poly_lr(int iteration, int max_iter, double base_lr, double power);
double poly_lr(int iteration, const TrainConfig& config);

/// Mirrors x -> width - x.
std::vector<Annotation> flip_annotations(const std::vector<Annotation>& annotations, int width);
std::vector<Annotation> scale_annotations(const std::vector<Annotation>& annotations,
                                          double factor);

struct AugmentedSample {
  Image image;
  std::vector<Annotation> annotations;
  int scale = 0;
  bool flipped = false;
};

/// Resizes the short edge to a scale drawn uniformly from config.scales,
/// then flips horizontally with config.flip_probability.
AugmentedSample augment(const Image& image, const std::vector<Annotation>& annotations,
                        const TrainConfig& config, std::mt19937_64& draw);

struct MetricsRow {
  int iteration = 0;
  double lr = 0;
  double total = 0;
  LossComponents terms;
};

/// "iter, lr, L_total, L_rpn, L_cls, L_box, L_mask, L_gts".
std::string format_metrics_row(const MetricsRow& row);

struct TrainOutputs {
  std::filesystem::path checkpoint;   // final and periodic checkpoints (may be empty)
  std::filesystem::path metrics_log;  // may be empty
  std::function<void(const MetricsRow&)> on_log;
};

struct TrainResult {
  Detector model;
  std::vector<MetricsRow> history;  // one row per iteration
};

/// Diverged training: the last good parameters are saved to the checkpoint
/// path (when given) before this is thrown.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

TrainResult train(const std::vector<Sample>& dataset, const TrainConfig& config,
                  const ModelConfig& model_config, const TrainOutputs& outputs = {});

}  // namespace ctxdet

#endif  // CTXDET_TRAINER_HPP_
