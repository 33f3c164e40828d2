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

#include "ctxdet/dataio.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "temp_dir.hpp"

namespace ctxdet {
namespace {

TEST(AnnotationParseTest, QuadWithTranscription) {
  const Annotation a = parse_annotation_line("1,2,11,2,11,8,1,8,hello");
  EXPECT_EQ(a.polygon.size(), 4u);
  EXPECT_EQ(a.transcription, "hello");
  EXPECT_FALSE(a.ignore);
  EXPECT_DOUBLE_EQ(polygon_area(a.polygon), 60.0);
}

TEST(AnnotationParseTest, IgnoreSentinelAndCommasInText) {
  EXPECT_TRUE(parse_annotation_line("0,0,4,0,4,4,0,4,###").ignore);
  const Annotation a = parse_annotation_line("0,0,4,0,4,4,0,4,a,b");
  EXPECT_EQ(a.transcription, "a,b");
  // A numeric-looking transcription stays a transcription.
  EXPECT_EQ(parse_annotation_line("0,0,4,0,4,4,0,4,2024").transcription, "2024");
  // Longer polygons.
  EXPECT_EQ(parse_annotation_line("0,0,2,0,4,0,4,4,2,4,0,4,x").polygon.size(), 6u);
}

TEST(AnnotationParseTest, ErrorsNameTheLine) {
  try {
    parse_annotation_line("1,2,3", 7);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
  EXPECT_THROW(parse_annotation_line("0,0,4,0,4,4,0,4"), ParseError);
  EXPECT_THROW(parse_annotation_line("0,0,4,0,x,4,0,4,t"), ParseError);
  EXPECT_THROW(parse_annotation_line("0,0,0,0,0,0,0,0,t"), ParseError);
}

TEST(AnnotationParseTest, FormatRoundTrip) {
  const Annotation a = parse_annotation_line("1.25,2,11,2.5,11,8,1,8,word");
  const Annotation b = parse_annotation_line(format_annotation_line(a));
  ASSERT_EQ(a.polygon.size(), b.polygon.size());
  for (std::size_t i = 0; i < a.polygon.size(); ++i) {
    EXPECT_NEAR(a.polygon[i].x, b.polygon[i].x, 1e-9);
    EXPECT_NEAR(a.polygon[i].y, b.polygon[i].y, 1e-9);
  }
  EXPECT_EQ(b.transcription, "word");
}

TEST(AnnotationFileTest, WriteReadRoundTripWithBom) {
  test::TempDir dir;
  const auto path = dir.path() / "a.txt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "\xEF\xBB\xBF" << "0,0,4,0,4,4,0,4,one\r\n\n5,5,9,5,9,9,5,9,###\n";
  }
  const auto anns = read_annotation_file(path);
  ASSERT_EQ(anns.size(), 2u);
  EXPECT_EQ(anns[0].transcription, "one");
  EXPECT_TRUE(anns[1].ignore);
  write_annotation_file(anns, dir.path() / "b.txt");
  EXPECT_EQ(read_annotation_file(dir.path() / "b.txt").size(), 2u);
  EXPECT_THROW(read_annotation_file(dir.path() / "missing.txt"), IoError);
}

TEST(GroundTruthTest, MasksBoxesAndIgnore) {
  std::vector<Annotation> anns{parse_annotation_line("2,2,10,2,10,6,2,6,ab"),
                               parse_annotation_line("20,20,30,20,30,28,20,28,###"),
                               parse_annotation_line("-5,-5,4,-5,4,3,-5,3,edge")};
  const GroundTruth gt = make_ground_truth(anns, 32, 40);
  ASSERT_EQ(gt.instances.size(), 2u);
  EXPECT_EQ(gt.instances[0].mask.count(), 32u);
  EXPECT_EQ(gt.instances[1].box, (AxisRect{0, 0, 4, 3}));
  EXPECT_EQ(gt.ignore_regions.size(), 1u);
  EXPECT_EQ(gt.ignore_map.count(), 80u);
  // The two text instances share pixels (2,2) and (3,2).
  EXPECT_EQ(gt.global_map.count(), gt.instances[0].mask.count() + gt.instances[1].mask.count() - 2);
  EXPECT_EQ(gt.global_map.at(25, 25), 0);
}

TEST(SceneTest, DeterministicAndValid) {
  SceneSpec spec;
  spec.seed = 42;
  spec.height = 112;
  spec.width = 128;
  const Scene a = generate_scene(spec);
  const Scene b = generate_scene(spec);
  EXPECT_EQ(a.image, b.image);
  ASSERT_EQ(a.annotations.size(), b.annotations.size());
  EXPECT_GE(a.annotations.size(), 1u);
  EXPECT_EQ(a.image.height, 112);
  EXPECT_EQ(a.image.width, 128);
  spec.seed = 43;
  EXPECT_NE(generate_scene(spec).image, a.image);
}

TEST(SceneTest, AnnotationsInsideFrameAndCountsInRange) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    const Scene s = generate_scene(spec);
    EXPECT_GE(int(s.annotations.size()), spec.text_count.min);
    EXPECT_LE(int(s.annotations.size()), spec.text_count.max);
    for (const Annotation& a : s.annotations) {
      const AxisRect b = axis_aligned_bbox(a.polygon);
      EXPECT_GE(b.x_min, -1e-9);
      EXPECT_GE(b.y_min, -1e-9);
      EXPECT_LE(b.x_max, spec.width + 1e-9);
      EXPECT_LE(b.y_max, spec.height + 1e-9);
    }
  }
}

TEST(SceneTest, IgnoreFractionMarksWords) {
  std::size_t ignored = 0;
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.ignore_fraction = 0.5;
    for (const auto& a : generate_scene(spec).annotations) {
      ignored += a.ignore;
      ++total;
    }
  }
  EXPECT_GT(ignored, total / 5);
  EXPECT_LT(ignored, total * 4 / 5);
}

TEST(SceneSpecTest, ValidateNamesField) {
  SceneSpec spec;
  spec.text_count = {3, 1};
  try {
    spec.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("text_count"), std::string::npos);
  }
  spec = {};
  spec.height = 4;
  EXPECT_THROW(generate_scene(spec), std::invalid_argument);
}

TEST(DatasetTest, WriteLoadRoundTripAndDeterminism) {
  test::TempDir dir;
  const auto specs = make_scene_specs(SceneSpec{}, 3, 100, 96, 128);
  ASSERT_EQ(specs.size(), 3u);
  for (const auto& s : specs) {
    EXPECT_GE(s.height, 96);
    EXPECT_LE(s.width, 128);
  }
  const Manifest m = write_dataset(specs, dir.path() / "a");
  write_dataset(specs, dir.path() / "b");
  ASSERT_EQ(m.entries.size(), 3u);
  for (const char* f : {"img_000000.ppm", "img_000002.txt", "manifest.tsv"}) {
    std::ifstream x(dir.path() / "a" / f, std::ios::binary), y(dir.path() / "b" / f, std::ios::binary);
    std::stringstream sx, sy;
    sx << x.rdbuf();
    sy << y.rdbuf();
    EXPECT_EQ(sx.str(), sy.str()) << f;
  }
  const auto samples = load_dataset(m.path);
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_EQ(samples[1].name, "img_000001");
  EXPECT_EQ(samples[1].image, generate_scene(specs[1]).image);
}

TEST(DatasetTest, EmptySpecListWritesNothing) {
  test::TempDir dir;
  const Manifest m = write_dataset({}, dir.path() / "empty");
  EXPECT_TRUE(m.path.empty());
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "empty" / "manifest.tsv"));
}

TEST(ImageTest, PpmRoundTripAndTensorPadding) {
  test::TempDir dir;
  Image img(5, 7);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = std::uint8_t(i * 7);
  write_ppm(img, dir.path() / "x.ppm");
  EXPECT_EQ(read_ppm(dir.path() / "x.ppm"), img);
  const FeatureMap t = image_to_tensor(img, 32);
  EXPECT_EQ(t.shape(), (Shape4{1, 3, 32, 32}));
  EXPECT_EQ(t.at(0, 0, 10, 10), 0.0f);
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
}

}  // namespace
}  // namespace ctxdet
