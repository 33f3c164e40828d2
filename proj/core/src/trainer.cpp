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

#include "ctxdet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ctxdet/checkpoint.hpp"
#include "ctxdet/image.hpp"

namespace ctxdet {
namespace {

constexpr std::uint64_t kSamplerSalt = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStepSalt = 0xC2B2AE3D27D4EB4FULL;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Polygon map_polygon(const Polygon& p, double scale, double flip_width) {
  std::vector<Point2> pts;
  pts.reserve(p.size());
  for (const Point2& q : p.vertices()) {
    Point2 r{q.x * scale, q.y * scale};
    if (flip_width >= 0) r.x = flip_width - r.x;
    pts.push_back(r);
  }
  return Polygon(std::move(pts));
}

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

void adam_step(ParameterStore& store, AdamState& state, const TrainConfig& cfg, double lr,
               int step) {
  auto& params = store.all();
  if (state.m.empty()) {
    for (const Parameter& p : params) {
      state.m.emplace_back(p.value.size(), 0.0f);
      state.v.emplace_back(p.value.size(), 0.0f);
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    const bool decay = cfg.weight_decay > 0 && ends_with(p.name, ".weight");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      double g = p.grad[j];
      if (decay && cfg.weight_decay_mode == WeightDecayMode::kL2) g += cfg.weight_decay * p.value[j];
      m[j] = static_cast<float>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g);
      v[j] = static_cast<float>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g);
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      double w = p.value[j];
      if (decay && cfg.weight_decay_mode == WeightDecayMode::kDecoupled) {
        w -= lr * cfg.weight_decay * w;
      }
      w -= lr * mh / (std::sqrt(vh) + cfg.epsilon);
      p.value[j] = static_cast<float>(w);
    }
  }
}

bool grads_finite(const ParameterStore& store) {
  for (const Parameter& p : store.all()) {
    if (!p.grad.all_finite()) return false;
  }
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train: " + what); };
  for (double l : {lambda1, lambda2, lambda3, lambda4}) {
    if (!(l >= 0)) fail("lambda1..lambda4 must be >= 0");
  }
  if (!(base_lr > 0)) fail("base_lr must be > 0");
  if (!(power > 0)) fail("power must be > 0");
  if (max_iter < 1 && epochs < 1) fail("max_iter or epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("beta1/beta2 must be in [0, 1)");
  if (!(epsilon > 0)) fail("epsilon must be > 0");
  if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
  if (scales.empty()) fail("scales must not be empty");
  for (int s : scales) {
    if (s < 32) fail("scales entries must be >= 32");
  }
  if (!(flip_probability >= 0 && flip_probability <= 1)) fail("flip_probability must be in [0, 1]");
  if (log_interval < 1) fail("log_interval must be >= 1");
  if (checkpoint_interval < 0) fail("checkpoint_interval must be >= 0");
}

int TrainConfig::resolved_max_iter(std::size_t dataset_size) const {
  if (epochs <= 0) return max_iter;
  const std::size_t per_epoch = (dataset_size + batch_size - 1) / batch_size;
  return static_cast<int>(static_cast<std::size_t>(epochs) * std::max<std::size_t>(per_epoch, 1));
}

NonFiniteLoss::NonFiniteLoss(const std::string& term, double value)
    : std::runtime_error("non-finite loss term " + term + " = " + std::to_string(value)),
      term_(term) {}

double total_loss(const LossComponents& l, const TrainConfig& c) {
  const std::pair<const char*, double> terms[] = {
      {"L_rpn", l.rpn}, {"L_cls", l.cls}, {"L_box", l.box}, {"L_mask", l.mask}, {"L_gts", l.gts}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NonFiniteLoss(name, v);
  }
  return l.rpn + c.lambda1 * l.cls + c.lambda2 * l.box + c.lambda3 * l.mask + c.lambda4 * l.gts;
}

double poly_lr(int iteration, int max_iter, double base_lr, double power) {
  if (max_iter < 1 || iteration < 0 || iteration > max_iter) {
    throw std::out_of_range("poly_lr: iteration " + std::to_string(iteration) +
                            " outside [0, " + std::to_string(max_iter) + "]");
  }
  return base_lr * std::pow(1.0 - static_cast<double>(iteration) / max_iter, power);
}

double poly_lr(int iteration, const TrainConfig& config) {
  return poly_lr(iteration, config.max_iter, config.base_lr, config.power);
}

std::vector<Annotation> flip_annotations(const std::vector<Annotation>& annotations, int width) {
  std::vector<Annotation> out;
  out.reserve(annotations.size());
  for (const Annotation& a : annotations) {
    out.push_back({map_polygon(a.polygon, 1.0, width), a.transcription, a.ignore});
  }
  return out;
}

std::vector<Annotation> scale_annotations(const std::vector<Annotation>& annotations,
                                          double factor) {
  std::vector<Annotation> out;
  out.reserve(annotations.size());
  for (const Annotation& a : annotations) {
    out.push_back({map_polygon(a.polygon, factor, -1.0), a.transcription, a.ignore});
  }
  return out;
}

AugmentedSample augment(const Image& image, const std::vector<Annotation>& annotations,
                        const TrainConfig& config, std::mt19937_64& draw) {
  std::uniform_int_distribution<std::size_t> pick(0, config.scales.size() - 1);
  std::bernoulli_distribution flip(config.flip_probability);
  AugmentedSample out;
  out.scale = config.scales[pick(draw)];
  out.flipped = flip(draw);
  const int short_edge = std::min(image.height, image.width);
  const double factor = static_cast<double>(out.scale) / short_edge;
  const int h = std::max(1, static_cast<int>(std::lround(image.height * factor)));
  const int w = std::max(1, static_cast<int>(std::lround(image.width * factor)));
  out.image = resize_image(image, h, w);
  out.annotations = scale_annotations(annotations, factor);
  if (out.flipped) {
    out.image = flip_horizontal(out.image);
    out.annotations = flip_annotations(out.annotations, w);
  }
  return out;
}

std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d, %.6e, %.6f, %.6f, %.6f, %.6f, %.6f, %.6f", r.iteration,
                r.lr, r.total, r.terms.rpn, r.terms.cls, r.terms.box, r.terms.mask, r.terms.gts);
  return buf;
}

TrainResult train(const std::vector<Sample>& dataset, const TrainConfig& config,
                  const ModelConfig& model_config, const TrainOutputs& outputs) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  const int max_iter = config.resolved_max_iter(dataset.size());

  TrainResult result{Detector(model_config, config.seed), {}};
  Detector& model = result.model;
  std::mt19937_64 sampler(config.seed ^ kSamplerSalt);
  std::mt19937_64 step_rng(config.seed ^ kStepSalt);

  TrainStepOptions opts;
  opts.weights = config.loss_weights();
  opts.grad_scale = 1.0 / config.batch_size;
  opts.rpn = config.rpn;
  opts.roi = config.roi;
  opts.seg_ignore = config.seg_ignore;

  std::ofstream log;
  if (!outputs.metrics_log.empty()) {
    if (outputs.metrics_log.has_parent_path()) {
      std::filesystem::create_directories(outputs.metrics_log.parent_path());
    }
    log.open(outputs.metrics_log, std::ios::trunc);
    if (!log) throw IoError("cannot write metrics log " + outputs.metrics_log.string());
    log << "# iter, lr, L_total, L_rpn, L_cls, L_box, L_mask, L_gts\n";
  }

  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  AdamState adam;
  result.history.reserve(static_cast<std::size_t>(max_iter));

  for (int it = 0; it < max_iter; ++it) {
    const double lr = poly_lr(it, max_iter, config.base_lr, config.power);
    model.parameters().zero_grad();
    LossComponents mean;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), sampler);
        cursor = 0;
      }
      const Sample& s = dataset[order[cursor++]];
      const AugmentedSample aug = augment(s.image, s.annotations, config, sampler);
      const GroundTruth gt = make_ground_truth(aug.annotations, aug.image.height, aug.image.width);
      const LossComponents l = model.train_step(image_to_tensor(aug.image, 32), gt, opts, step_rng);
      const double k = 1.0 / config.batch_size;
      mean.rpn += k * l.rpn;
      mean.cls += k * l.cls;
      mean.box += k * l.box;
      mean.mask += k * l.mask;
      mean.gts += k * l.gts;
    }

    MetricsRow row{it, lr, 0.0, mean};
    try {
      row.total = total_loss(mean, config);
      if (!grads_finite(model.parameters())) throw NonFiniteLoss("gradient", NAN);
    } catch (const NonFiniteLoss& e) {
      std::string where;
      if (!outputs.checkpoint.empty()) {
        save_checkpoint(model, outputs.checkpoint);
        where = "; last good parameters saved to " + outputs.checkpoint.string();
      }
      throw TrainingDiverged("training diverged at iteration " + std::to_string(it) + ": " +
                             e.what() + where);
    }

    adam_step(model.parameters(), adam, config, lr, it + 1);
    result.history.push_back(row);

    if (it % config.log_interval == 0 || it + 1 == max_iter) {
      if (log) log << format_metrics_row(row) << '\n' << std::flush;
      if (outputs.on_log) outputs.on_log(row);
    }
    if (!outputs.checkpoint.empty() && config.checkpoint_interval > 0 &&
        (it + 1) % config.checkpoint_interval == 0 && it + 1 < max_iter) {
      save_checkpoint(model, outputs.checkpoint);
    }
  }
  if (!outputs.checkpoint.empty()) save_checkpoint(model, outputs.checkpoint);
  return result;
}

}  // namespace ctxdet
