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

// Test-time pipeline: proposals, heads, mask pasting, segmentation-map
// re-scoring and polygon extraction.

#ifndef CTXDET_INFERENCE_HPP_
#define CTXDET_INFERENCE_HPP_

#include <filesystem>
#include <vector>

#include "ctxdet/detector.hpp"
#include "ctxdet/geometry.hpp"
#include "ctxdet/image.hpp"

namespace ctxdet {

struct InferenceConfig {
  RpnParams rpn;
  double score_threshold = 0.55;   // on the active (fused or cs) score
  double candidate_floor = 0.05;   // cs text probability needed to reach the mask head
  double box_nms_iou = 0.5;
  int detections_per_image = 100;
  double mask_threshold = 0.5;
  double polygon_nms_iou = 0.3;
  bool rescore = true;
  bool contour_output = false;     // traced mask outline instead of the min-area rectangle

  void validate() const;
};

/// (non-text, text) probabilities; the two entries sum to 1.
struct ScorePair {
  double background = 0.5;
  double text = 0.5;

  static ScorePair from_text(double p) { return {1.0 - p, p}; }
};

struct TextInstance {
  BinaryMask mask;       // image resolution
  Polygon polygon;
  RotatedRect box;
  AxisRect detection_box;
  ScorePair cs;
  ScorePair is;
  double fused = 0.5;
  double score = 0.0;    // the score used for ranking and thresholding
};

/// Mean text-channel probability over the set pixels of `mask`;
/// `probabilities` is a (1, 2, H', W') map with H' >= mask height and
/// W' >= mask width. Throws std::invalid_argument for an empty mask.
template <typename T>
double instance_score(const BinaryMask& mask, const Tensor<T>& probabilities);

/// e^(cs1 + is1) / (e^(cs1 + is1) + e^(cs0 + is0)).
double fused_score(const ScorePair& cs, const ScorePair& is);

enum class RescoreMode { kOff, kOn };

/// Sets every instance's score to its fused score (kOn) or to the text
/// probability of cs (kOff) and sorts by that score, descending and stable.
std::vector<TextInstance> rescore_toggle(std::vector<TextInstance> instances, RescoreMode mode);

/// Per-image detector output before any score threshold.
struct Candidates {
  int height = 0;
  int width = 0;
  std::vector<TextInstance> instances;
  bool has_seg_map = false;
  FeatureMap seg_probabilities;  // (1, 2, H', W') at padded resolution
};

Candidates detect_candidates(const Detector& model, const Image& image,
                             const InferenceConfig& config);

/// Re-scores, drops instances below config.score_threshold and applies
/// polygon NMS. kOn requires candidates produced with a segmentation map.
std::vector<TextInstance> finalize(const Candidates& candidates, const InferenceConfig& config,
                                   RescoreMode mode);

/// detect_candidates + finalize with the mode selected by config.rescore.
std::vector<TextInstance> detect(const Detector& model, const Image& image,
                                 const InferenceConfig& config);

/// One line per instance: "x1,y1,...,xN,yN,score".
void write_detections(const std::vector<TextInstance>& instances,
                      const std::filesystem::path& path);

/// Text probability of the global map as an 8-bit grayscale raster cropped
/// to (height, width).
void write_seg_map(const FeatureMap& probabilities, int height, int width,
                   const std::filesystem::path& path);

}  // namespace ctxdet

#endif  // CTXDET_INFERENCE_HPP_
