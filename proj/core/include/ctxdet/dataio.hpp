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

#ifndef CTXDET_DATAIO_HPP_
#define CTXDET_DATAIO_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctxdet/geometry.hpp"
#include "ctxdet/image.hpp"

namespace ctxdet {

/// Transcription marking an unreadable, ignored region.
inline constexpr std::string_view kIgnoreSentinel = "###";

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Annotation {
  Polygon polygon;
  std::string transcription;
  bool ignore = false;
};

/// Parses "x1,y1,...,xN,yN,transcription" with N >= 4. The coordinate block
/// is the longest even-length run of leading numeric fields that still leaves
/// one field for the transcription; the transcription may contain commas.
/// Errors name `line_number`.
Annotation parse_annotation_line(std::string_view line, std::size_t line_number = 1);

/// Inverse of parse_annotation_line, coordinates printed with 2 decimals.
std::string format_annotation_line(const Annotation& a);

std::vector<Annotation> read_annotation_file(const std::filesystem::path& path);
void write_annotation_file(const std::vector<Annotation>& annotations,
                           const std::filesystem::path& path);

struct GroundTruthInstance {
  Polygon polygon;
  AxisRect box;
  BinaryMask mask;
};

struct GroundTruth {
  std::vector<GroundTruthInstance> instances;
  BinaryMask global_map;
  std::vector<Polygon> ignore_regions;
  BinaryMask ignore_map;  // union of ignore polygons
};

/// Instance masks, horizontal boxes (clamped to the frame) and the global
/// text map (union of non-ignored masks). Ignored annotations only feed
/// ignore_regions / ignore_map.
GroundTruth make_ground_truth(const std::vector<Annotation>& annotations,
                              int height, int width);

struct IntRange {
  int min = 0;
  int max = 0;
};

/// Parameters of one synthetic scene. The seed fully determines the output.
struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 128;
  int width = 128;
  IntRange text_count{1, 4};
  IntRange text_height{8, 16};     // stroke-box height in pixels
  IntRange glyphs_per_word{3, 7};
  double rotated_fraction = 0.3;   // remaining words are horizontal or curved
  double curved_fraction = 0.15;
  double max_rotation_deg = 50.0;
  IntRange fence_banks{0, 2};      // periodic parallel-bar banks
  IntRange disc_clusters{0, 2};    // rows of ringed discs on a flat "table"
  double noise_sigma = 5.0;
  double ignore_fraction = 0.0;    // share of words annotated with "###"

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct Scene {
  Image image;
  std::vector<Annotation> annotations;
};

Scene generate_scene(const SceneSpec& spec);

struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path annotation;
};

struct Manifest {
  std::filesystem::path path;  // empty when nothing was written
  std::vector<ManifestEntry> entries;
};

/// Writes img_NNNNNN.ppm / img_NNNNNN.txt per spec plus manifest.tsv
/// ("image<TAB>annotation", paths relative to the manifest). An empty spec
/// list writes nothing.
Manifest write_dataset(const std::vector<SceneSpec>& specs,
                       const std::filesystem::path& directory);

Manifest read_manifest(const std::filesystem::path& manifest_path);

struct Sample {
  std::string name;
  Image image;
  std::vector<Annotation> annotations;
};

std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path);

/// `count` specs derived from a template: seeds base_seed, base_seed+1, ...
/// and image sides drawn from [min_side, max_side] with the seed's stream.
std::vector<SceneSpec> make_scene_specs(const SceneSpec& base, std::size_t count,
                                        std::uint64_t base_seed, int min_side,
                                        int max_side);

}  // namespace ctxdet

#endif  // CTXDET_DATAIO_HPP_
