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

#include "ctxdet/config.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "ctxdet/checkpoint.hpp"
#include "temp_dir.hpp"

namespace ctxdet {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text, "run.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(RunConfigTest, DefaultsRoundTrip) {
  const RunConfig c;
  const std::string text = format_run_config(c);
  EXPECT_EQ(format_run_config(parse_run_config(text)), text);
}

TEST(RunConfigTest, ModifiedValuesRoundTrip) {
  const RunConfig c = parse_run_config(
      "# comment\n"
      "train.base_lr = 0.0003\n"
      "train.scales = 64, 80\n"
      "model.tcm = false\n"
      "model.anchor_ratios = 0.25, 1, 4\n"
      "scene.text_count = 2, 5\n"
      "inference.score_threshold = 0.1\n"
      "rpn.post_nms_top_m = 77\n"
      "ablate.seeds = 4, 5\n"
      "\n"
      "data.dir = /tmp/x y\n");
  EXPECT_EQ(c.train.base_lr, 3e-4);
  EXPECT_EQ(c.train.scales, (std::vector<int>{64, 80}));
  EXPECT_FALSE(c.model.tcm);
  EXPECT_EQ(c.model.anchor_ratios.size(), 3u);
  EXPECT_EQ(c.inference.rpn.post_nms_top_m, 77);
  EXPECT_EQ(c.train.rpn.post_nms_top_m, 77);
  EXPECT_EQ(c.data.dir, "/tmp/x y");
  const std::string text = format_run_config(c);
  EXPECT_EQ(format_run_config(parse_run_config(text)), text);
}

TEST(RunConfigTest, UnknownKeyIsNamedWithLine) {
  const std::string msg = error_of("train.base_lr = 0.1\ntrain.lamda1 = 2\n");
  EXPECT_NE(msg.find("train.lamda1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
}

TEST(RunConfigTest, DuplicateAndMalformedRejected) {
  EXPECT_NE(error_of("train.seed = 1\ntrain.seed = 2\n").find("train.seed"), std::string::npos);
  EXPECT_NE(error_of("train.max_iter = ten\n").find("train.max_iter"), std::string::npos);
  EXPECT_NE(error_of("model.tcm = maybe\n").find("model.tcm"), std::string::npos);
  EXPECT_FALSE(error_of("just some words\n").empty());
  EXPECT_THROW(parse_run_config("train.base_lr = -1\n").validate(), ConfigError);
}

TEST(RunConfigTest, LoadReportsMissingFile) {
  EXPECT_THROW(load_run_config("/nonexistent/ctxdet.cfg"), ConfigError);
}

TEST(ModelConfigTextTest, RoundTripAndSensitivity) {
  ModelConfig m;
  m.pyramid_channels = 24;
  const ModelConfig back = parse_model_config_text(model_config_text(m));
  EXPECT_EQ(model_config_text(back), model_config_text(m));
  EXPECT_NE(config_hash(m), config_hash(ModelConfig{}));
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  test::TempDir dir;
  ModelConfig m;
  m.tcm = false;
  const Detector d(m, 42);
  save_checkpoint(d, dir.path() / "a.ckpt");
  const Detector back = load_checkpoint(dir.path() / "a.ckpt", &m);
  EXPECT_FALSE(back.config().tcm);
  ASSERT_EQ(back.parameters().all().size(), d.parameters().all().size());
  for (std::size_t i = 0; i < d.parameters().all().size(); ++i) {
    EXPECT_EQ(back.parameters()[i].name, d.parameters()[i].name);
    const auto x = back.parameters()[i].value.values();
    const auto y = d.parameters()[i].value.values();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  save_checkpoint(back, dir.path() / "b.ckpt");
  std::ifstream a(dir.path() / "a.ckpt", std::ios::binary), b(dir.path() / "b.ckpt", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}),
            std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(CheckpointTest, ConfigMismatchAndCorruptionRejected) {
  test::TempDir dir;
  const Detector d(ModelConfig{}, 1);
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(d, path);
  ModelConfig other;
  other.tcm = false;
  EXPECT_THROW(load_checkpoint(path, &other), CheckpointError);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  write(bytes + "junk");
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  write(bytes);
  EXPECT_NO_THROW(load_checkpoint(path));
  EXPECT_THROW(load_checkpoint(dir.path() / "none.ckpt"), IoError);
}

}  // namespace
}  // namespace ctxdet
