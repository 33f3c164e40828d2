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

#ifndef CTXDET_EVALUATOR_HPP_
#define CTXDET_EVALUATOR_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxdet/dataio.hpp"
#include "ctxdet/geometry.hpp"

namespace ctxdet {

struct Detection {
  Polygon polygon;
  double score = 0.0;
};

/// Reads a detection file ("x1,y1,...,xN,yN,score" per line).
std::vector<Detection> read_detections(const std::filesystem::path& path);

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (detection, gt)
  std::vector<std::size_t> excluded;   // detections that fell on ignore regions
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

/// Greedy one-to-one matching in descending score order (ties: lower index).
/// A detection whose best-overlapping region is an ignore region with
/// IoU >= threshold is excluded from counting; otherwise it matches the
/// unmatched non-ignored GT of maximal IoU (ties: lower index) if that IoU
/// reaches the threshold.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const Annotation> ground_truth, double iou_threshold);

struct Prf {
  double precision = 0;
  double recall = 0;
  double f = 0;
};

/// Harmonic mean, 0 when both inputs are 0. Works on fractions or percents.
double f_measure(double precision, double recall);

/// Fractions in [0, 1]; empty denominators give 0.
Prf prf(std::size_t tp, std::size_t fp, std::size_t fn);

struct ImageEval {
  std::string name;
  MatchResult match;
};

struct EvalReport {
  std::vector<ImageEval> images;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  Prf scores;
};

EvalReport evaluate(std::span<const std::string> names,
                    std::span<const std::vector<Detection>> detections,
                    std::span<const std::vector<Annotation>> ground_truth, double iou_threshold);

/// Plain-text summary plus one line per image.
std::string format_report_text(const EvalReport& report);
/// "key = value" lines, P/R/F with 4 decimals.
std::string format_report_kv(const EvalReport& report);
/// Writes report.txt and report.kv into `directory`.
void write_report(const EvalReport& report, const std::filesystem::path& directory);

inline constexpr const char* kBaselineRow = "Baseline";
inline constexpr const char* kTcmRow = "+TCM";
inline constexpr const char* kTcmRsRow = "+TCM+RS";

struct AblationRun {
  std::string row;
  std::uint64_t seed = 0;
  Prf scores;
};

struct AblationRow {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<Prf> per_seed;
  Prf median;  // per-metric median over seeds
};

struct AblationTable {
  std::vector<AblationRow> rows;  // Baseline, +TCM, +TCM+RS

  const AblationRow& row(const std::string& name) const;
};

/// Groups runs into the three rows; throws std::invalid_argument naming a
/// missing row.
AblationTable ablation_table(std::span<const AblationRun> runs);

std::string format_ablation_text(const AblationTable& table);
std::string format_ablation_kv(const AblationTable& table);
AblationTable parse_ablation_kv(const std::string& text);

}  // namespace ctxdet

#endif  // CTXDET_EVALUATOR_HPP_
