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

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string_view>

namespace ctxdet {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct BadValue {
  std::string what;
};

template <typename T>
T parse_number(std::string_view s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (s.empty() || r.ec != std::errc() || r.ptr != end) {
    throw BadValue{"'" + std::string(s) + "' is not a valid number"};
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "on" || s == "1") return true;
  if (s == "false" || s == "off" || s == "0") return false;
  throw BadValue{"'" + std::string(s) + "' is not a boolean (true/false)"};
}

template <typename T>
std::string to_text(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename Range>
std::string join(const Range& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ", ";
    out += to_text(v);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

class Fields {
 public:
  template <typename T>
  void number(std::string key, T* p) {
    add(std::move(key), [p](std::string_view s) { *p = parse_number<T>(s); },
        [p] { return to_text(*p); });
  }
  void flag(std::string key, bool* p) {
    add(std::move(key), [p](std::string_view s) { *p = parse_bool(s); },
        [p] { return std::string(*p ? "true" : "false"); });
  }
  void text(std::string key, std::string* p) {
    add(std::move(key), [p](std::string_view s) { *p = std::string(s); }, [p] { return *p; });
  }
  void path(std::string key, std::filesystem::path* p) {
    add(std::move(key), [p](std::string_view s) { *p = std::filesystem::path(std::string(s)); },
        [p] { return p->string(); });
  }
  void range(std::string key, IntRange* p) {
    add(std::move(key),
        [p](std::string_view s) {
          const auto parts = split_list(s);
          if (parts.size() != 2) throw BadValue{"expected 'min, max'"};
          *p = {parse_number<int>(parts[0]), parse_number<int>(parts[1])};
        },
        [p] { return to_text(p->min) + ", " + to_text(p->max); });
  }
  template <typename Container>
  void list(std::string key, Container* p) {
    using T = typename Container::value_type;
    add(std::move(key),
        [p](std::string_view s) {
          const auto parts = split_list(s);
          Container c{};
          if constexpr (requires { c.push_back(T{}); }) {
            for (auto part : parts) c.push_back(parse_number<T>(part));
          } else {
            if (parts.size() != c.size()) {
              throw BadValue{"expected " + std::to_string(c.size()) + " values"};
            }
            for (std::size_t i = 0; i < parts.size(); ++i) c[i] = parse_number<T>(parts[i]);
          }
          *p = std::move(c);
        },
        [p] { return join(*p); });
  }
  template <typename E>
  void choice(std::string key, E* p, std::vector<std::pair<std::string, E>> options) {
    add(std::move(key),
        [p, options](std::string_view s) {
          std::string names;
          for (const auto& [name, value] : options) {
            if (s == name) {
              *p = value;
              return;
            }
            names += (names.empty() ? "" : ", ") + name;
          }
          throw BadValue{"'" + std::string(s) + "' is not one of " + names};
        },
        [p, options] {
          for (const auto& [name, value] : options) {
            if (*p == value) return name;
          }
          return std::string();
        });
  }

  std::vector<Field>& all() { return fields_; }

 private:
  void add(std::string key, std::function<void(std::string_view)> set,
           std::function<std::string()> get) {
    fields_.push_back({std::move(key), std::move(set), std::move(get)});
  }
  std::vector<Field> fields_;
};

void bind_model(Fields& f, ModelConfig& m) {
  f.number("model.stem_channels", &m.stem_channels);
  f.list("model.backbone_channels", &m.backbone_channels);
  f.number("model.pyramid_channels", &m.pyramid_channels);
  f.flag("model.tcm", &m.tcm);
  f.choice("model.tcm_activation", &m.tcm_activation,
           {{"relu", Activation::kRelu}, {"leaky_relu", Activation::kLeakyRelu}});
  f.list("model.anchor_sizes", &m.anchor_sizes);
  f.list("model.anchor_ratios", &m.anchor_ratios);
  f.number("model.box_pool", &m.box_pool);
  f.number("model.mask_pool", &m.mask_pool);
  f.number("model.box_hidden", &m.box_hidden);
  f.number("model.mask_channels", &m.mask_channels);
  f.number("model.fpn_canonical_size", &m.fpn_canonical_size);
  f.number("model.fpn_canonical_level", &m.fpn_canonical_level);
  f.number("model.new_layer_std", &m.new_layer_std);
  f.flag("model.seg_per_stage_loss", &m.seg_per_stage_loss);
}

void bind_rpn(Fields& f, RpnParams& r) {
  f.number("rpn.positive_iou", &r.positive_iou);
  f.number("rpn.negative_iou", &r.negative_iou);
  f.number("rpn.batch_per_image", &r.batch_per_image);
  f.number("rpn.positive_fraction", &r.positive_fraction);
  f.number("rpn.nms_iou", &r.nms_iou);
  f.number("rpn.pre_nms_top_k", &r.pre_nms_top_k);
  f.number("rpn.post_nms_top_m", &r.post_nms_top_m);
  f.number("rpn.min_size", &r.min_size);
}

void bind_run(Fields& f, RunConfig& c) {
  SceneSpec& s = c.scene;
  f.range("scene.text_count", &s.text_count);
  f.range("scene.text_height", &s.text_height);
  f.range("scene.glyphs_per_word", &s.glyphs_per_word);
  f.number("scene.rotated_fraction", &s.rotated_fraction);
  f.number("scene.curved_fraction", &s.curved_fraction);
  f.number("scene.max_rotation_deg", &s.max_rotation_deg);
  f.range("scene.fence_banks", &s.fence_banks);
  f.range("scene.disc_clusters", &s.disc_clusters);
  f.number("scene.noise_sigma", &s.noise_sigma);
  f.number("scene.ignore_fraction", &s.ignore_fraction);

  DataConfig& d = c.data;
  f.path("data.dir", &d.dir);
  f.number("data.train_count", &d.train_count);
  f.number("data.test_count", &d.test_count);
  f.number("data.train_seed", &d.train_seed);
  f.number("data.test_seed", &d.test_seed);
  f.number("data.min_side", &d.min_side);
  f.number("data.max_side", &d.max_side);

  TrainConfig& t = c.train;
  f.number("train.lambda1", &t.lambda1);
  f.number("train.lambda2", &t.lambda2);
  f.number("train.lambda3", &t.lambda3);
  f.number("train.lambda4", &t.lambda4);
  f.number("train.base_lr", &t.base_lr);
  f.number("train.max_iter", &t.max_iter);
  f.number("train.epochs", &t.epochs);
  f.number("train.power", &t.power);
  f.number("train.batch_size", &t.batch_size);
  f.number("train.beta1", &t.beta1);
  f.number("train.beta2", &t.beta2);
  f.number("train.epsilon", &t.epsilon);
  f.number("train.weight_decay", &t.weight_decay);
  f.choice("train.weight_decay_mode", &t.weight_decay_mode,
           {{"decoupled", WeightDecayMode::kDecoupled}, {"l2", WeightDecayMode::kL2}});
  f.list("train.scales", &t.scales);
  f.number("train.flip_probability", &t.flip_probability);
  f.number("train.seed", &t.seed);
  f.number("train.log_interval", &t.log_interval);
  f.number("train.checkpoint_interval", &t.checkpoint_interval);
  f.choice("train.seg_ignore", &t.seg_ignore,
           {{"background", SegIgnoreMode::kBackground}, {"masked", SegIgnoreMode::kMasked}});

  bind_rpn(f, c.inference.rpn);
  RoiParams& r = c.train.roi;
  f.number("roi.batch_per_image", &r.batch_per_image);
  f.number("roi.foreground_fraction", &r.foreground_fraction);
  f.number("roi.foreground_iou", &r.foreground_iou);
  f.number("roi.max_mask_rois", &r.max_mask_rois);

  bind_model(f, c.model);

  InferenceConfig& i = c.inference;
  f.number("inference.score_threshold", &i.score_threshold);
  f.number("inference.candidate_floor", &i.candidate_floor);
  f.number("inference.box_nms_iou", &i.box_nms_iou);
  f.number("inference.detections_per_image", &i.detections_per_image);
  f.number("inference.mask_threshold", &i.mask_threshold);
  f.number("inference.polygon_nms_iou", &i.polygon_nms_iou);
  f.flag("inference.rescore", &i.rescore);
  f.flag("inference.contour_output", &i.contour_output);

  f.number("eval.iou_threshold", &c.eval.iou_threshold);

  f.list("ablate.seeds", &c.ablate.seeds);
  f.text("ablate.baseline_checkpoint", &c.ablate.baseline_checkpoint);
  f.text("ablate.tcm_checkpoint", &c.ablate.tcm_checkpoint);
}

void apply_lines(std::vector<Field>& fields, const std::string& text, const std::string& source) {
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + "expected 'key = value', got '" + std::string(line) + "'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    Field* field = nullptr;
    for (Field& f : fields) {
      if (f.key == key) field = &f;
    }
    if (field == nullptr) throw ConfigError(where + "unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate config key '" + key + "'");
    try {
      field->set(value);
    } catch (const BadValue& e) {
      throw ConfigError(where + "bad value for '" + key + "': " + e.what);
    }
  }
}

std::string format_fields(std::vector<Field>& fields) {
  std::string out;
  for (const Field& f : fields) out += f.key + " = " + f.get() + "\n";
  return out;
}

}  // namespace

void RunConfig::validate() const {
  try {
    scene.validate();
    train.validate();
    model.validate();
    inference.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (data.min_side < 32 || data.max_side < data.min_side) {
    throw ConfigError("data: need 32 <= min_side <= max_side");
  }
  if (!(eval.iou_threshold > 0 && eval.iou_threshold < 1)) {
    throw ConfigError("eval: iou_threshold must be in (0, 1)");
  }
  if (ablate.seeds.empty()) throw ConfigError("ablate: seeds must not be empty");
}

RunConfig parse_run_config(const std::string& text, const std::string& source, RunConfig base) {
  Fields f;
  bind_run(f, base);
  apply_lines(f.all(), text, source);
  base.train.rpn = base.inference.rpn;
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::string format_run_config(const RunConfig& config) {
  RunConfig copy = config;
  Fields f;
  bind_run(f, copy);
  return format_fields(f.all());
}

std::string model_config_text(const ModelConfig& config) {
  ModelConfig copy = config;
  Fields f;
  bind_model(f, copy);
  return format_fields(f.all());
}

ModelConfig parse_model_config_text(const std::string& text) {
  ModelConfig m;
  Fields f;
  bind_model(f, m);
  apply_lines(f.all(), text, "<model config>");
  return m;
}

}  // namespace ctxdet
