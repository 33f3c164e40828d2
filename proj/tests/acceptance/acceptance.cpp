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

// Acceptance checks. Usage: ctxdet_acceptance [criterion ...]; no arguments
// runs all nine. Prints one PASS/FAIL line per criterion and exits non-zero
// if any failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "ctxdet/geometry.hpp"
#include "ctxdet/inference.hpp"
#include "ctxdet/netops.hpp"
#include "ctxdet/tcm.hpp"
#include "ctxdet/trainer.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace ctxdet {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome formula_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  double fused_err = 0;
  for (int i = 0; i < 10000; ++i) {
    const ScorePair cs = ScorePair::from_text(u(rng));
    const ScorePair is = ScorePair::from_text(u(rng));
    const double want = oracle::fused_direct(cs.background, cs.text, is.background, is.text);
    fused_err = std::max(fused_err, std::abs(fused_score(cs, is) - want) / want);
  }

  double is_err = 0;
  std::bernoulli_distribution coin(0.35);
  for (int t = 0; t < 100; ++t) {
    FeatureMapD map(1, 2, 32, 40);
    for (double& v : map.values()) v = u(rng);
    BinaryMask m(32, 40);
    for (auto& b : m.bits) b = coin(rng);
    m.at(5, 5) = 1;
    is_err = std::max(is_err, std::abs(instance_score(m, map) -
                                       oracle::masked_mean(m.bits, m.height, m.width, map)));
  }

  double ce_err = 0;
  std::normal_distribution<double> n(0, 3);
  for (int t = 0; t < 50; ++t) {
    FeatureMapD logits(1, 2, 24, 32);
    for (double& v : logits.values()) v = n(rng);
    BinaryMask gt(20, 30), exclude(20, 30);
    for (auto& b : gt.bits) b = coin(rng);
    for (int k = 0; k < 10; ++k) exclude.at(k, 2 * k) = 1;
    std::vector<std::uint8_t> labels(24 * 32, 0), keep(24 * 32, 1);
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 30; ++x) {
        labels[y * 32 + x] = gt.at(y, x);
        keep[y * 32 + x] = !exclude.at(y, x);
      }
    ce_err = std::max(ce_err, std::abs(seg_loss(logits, gt, exclude).loss -
                                       oracle::naive_ce(logits, labels, keep)));
  }
  const double secs = seconds_since(t0);
  return {fused_err < 1e-9 && is_err <= 1e-12 && ce_err <= 1e-10 && secs < 10,
          fmt("fused rel %.2e (<1e-9), instance abs %.2e (<=1e-12), seg CE abs %.2e (<=1e-10), "
              "%.2fs (<10s)",
              fused_err, is_err, ce_err, secs)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::vector<const RegisteredOperator*> ops;
  for (const auto& op : operator_registry()) ops.push_back(&op);
  for (const auto& op : tcm_operator_registry()) ops.push_back(&op);
  double worst = 0;
  std::string worst_name;
  for (const RegisteredOperator* op : ops) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      std::mt19937_64 rng(seed);
      const GradCheckReport r = grad_check(*op, op->sample_inputs(rng), 1e-4, seed, 1e-5);
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_name = op->name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120,
          fmt("%zu operators x 10 seeds, worst rel %.2e (%s) (<1e-4), %.1fs (<120s)", ops.size(),
              worst, worst_name.c_str(), secs)};
}

Outcome saliency_invariants() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 1), wide(0, 6);
  bool in_range = true;
  double ratio_err = 0;
  for (int t = 0; t < 20; ++t) {
    FeatureMapD s(1, 4, 9, 11), map(1, 2, 9, 11);
    for (double& v : s.values()) v = n(rng);
    for (double& v : map.values()) v = wide(rng);
    const auto a = pyramid_attention(s, map);
    for (double v : a.saliency.values()) in_range = in_range && v > 1.0 && v < std::exp(1.0);
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 11; ++x) {
          const double raw = s.at(0, c, y, x);
          const double sal = a.text_scale.at(0, 0, y, x);
          // attended = raw * saliency, compared as products to stay exact
          ratio_err = std::max(ratio_err, std::abs(a.attended.at(0, c, y, x) - raw * sal));
        }
  }
  FeatureMapD s(1, 3, 5, 5, 1.0), flat(1, 2, 5, 5, -2.0);
  const auto a = pyramid_attention(s, flat);
  double uniform_err = 0;
  for (double v : a.text_scale.values()) uniform_err = std::max(uniform_err, std::abs(v - 1.6487212707));
  return {in_range && ratio_err == 0.0 && uniform_err < 1e-6,
          fmt("saliency in (1, e): %s, attended - raw*saliency max %.1e (==0), uniform case "
              "|s - e^0.5| %.1e (<1e-6)",
              in_range ? "yes" : "no", ratio_err, uniform_err)};
}

Outcome geometry_oracles() {
  std::mt19937_64 rng(2024);
  double iou_err = 0;
  for (int t = 0; t < 200; ++t) {
    const auto a = oracle::random_convex_quad(rng);
    const auto b = oracle::random_convex_quad(rng);
    iou_err = std::max(iou_err, std::abs(polygon_iou(Polygon(a), Polygon(b)) -
                                         oracle::raster_iou(a, b, 100.0, 1000)));
  }

  std::size_t nms_mismatch = 0;
  std::uniform_real_distribution<double> score(0, 1);
  std::uniform_int_distribution<int> count(1, 12);
  std::uniform_real_distribution<double> thr(0.1, 0.7);
  for (int t = 0; t < 1000; ++t) {
    const int n = count(rng);
    std::vector<ScoredPolygon> in;
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) {
      // Quantized scores force some ties.
      const double s = std::round(score(rng) * 8) / 8;
      in.push_back({Polygon(oracle::random_convex_quad(rng)), s});
      scores.push_back(s);
    }
    std::vector<std::vector<double>> iou(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) iou[i][j] = polygon_iou(in[i].polygon, in[j].polygon);
    const double th = thr(rng);
    nms_mismatch += polygon_nms(in, th) != oracle::brute_force_nms(scores, iou, th);
  }

  // The 0.1 degree sweep overestimates the minimum by up to its slope times
  // half a step, so the area is compared against the sweep's bracket.
  double rect_err = 0;
  double sweep_dev = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<Point2> pts = oracle::random_convex_quad(rng);
    const auto extra = oracle::random_convex_quad(rng);
    pts.insert(pts.end(), extra.begin(), extra.begin() + 2);
    const double got = min_area_rect(std::span<const Point2>(pts)).area();
    const oracle::AreaBracket b = oracle::angle_sweep_bracket(pts, 0.1);
    const double below = std::max(0.0, b.lo - got) / b.lo;
    const double above = std::max(0.0, got - b.hi) / b.hi;
    rect_err = std::max({rect_err, below, above});
    sweep_dev = std::max(sweep_dev, std::abs(got - b.hi) / b.hi);
  }
  return {iou_err <= 0.01 && nms_mismatch == 0 && rect_err <= 1e-3,
          fmt("IoU vs raster max abs %.4f (<=0.01), NMS mismatches %zu/1000, min-rect area "
              "outside 0.1deg sweep bracket %.2e (<=1e-3; raw |area - best sample| %.2e)",
              iou_err, nms_mismatch, rect_err, sweep_dev)};
}

Outcome evaluation_arithmetic() {
  const double rows[3][3] = {{73.4, 76.2, 74.7}, {73.4, 80.3, 76.8}, {73.4, 84.2, 78.5}};
  double worst = 0;
  std::string got;
  for (const auto& r : rows) {
    const double f = f_measure(r[1], r[0]);
    worst = std::max(worst, std::abs(f - r[2]));
    got += fmt(" %.2f", f);
  }
  return {worst <= 0.15, fmt("F%s, max deviation %.3f (<=0.15)", got.c_str(), worst)};
}

Outcome schedule_exactness() {
  TrainConfig c;
  c.max_iter = 2000;
  const double e0 = std::abs(poly_lr(0, c) - 2e-3);
  const double e1 = std::abs(poly_lr(2000, c));
  const double e2 = std::abs(poly_lr(1000, c) - 2e-3 * std::pow(0.5, 0.9));
  return {e0 <= 1e-12 && e1 <= 1e-12 && e2 <= 1e-12,
          fmt("|lr(0)-2e-3| %.1e, |lr(max)| %.1e, |lr(mid)-2e-3*0.5^0.9| %.1e (each <=1e-12)", e0,
              e1, e2)};
}

Outcome rescore_behavior() {
  const int h = 40, w = 60;
  FeatureMapD probs(1, 2, h, w, 0.0);
  BinaryMask text(h, w), distractor(h, w);
  for (int y = 5; y < 15; ++y)
    for (int x = 5; x < 40; ++x) {
      text.at(y, x) = 1;
      probs.at(0, 1, y, x) = 0.95;
    }
  for (int y = 25; y < 35; ++y)
    for (int x = 10; x < 30; ++x) {
      distractor.at(y, x) = 1;
      probs.at(0, 1, y, x) = 0.01;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) probs.at(0, 0, y, x) = 1.0 - probs.at(0, 1, y, x);

  auto make = [&](const BinaryMask& m) {
    const RotatedRect r = mask_min_area_rect(m);
    TextInstance t{m, r.to_polygon(), r, {}, ScorePair::from_text(0.8), {}, 0.5, 0};
    t.is = ScorePair::from_text(instance_score(m, probs));
    t.fused = fused_score(t.cs, t.is);
    return t;
  };
  const std::vector<TextInstance> pair{make(distractor), make(text)};
  const auto off = rescore_toggle(pair, RescoreMode::kOff);
  const auto on = rescore_toggle(pair, RescoreMode::kOn);
  const bool tie = off[0].score == off[1].score;
  const bool text_first = on[0].mask.at(10, 10) == 1 && on[0].score > on[1].score;
  return {tie && text_first,
          fmt("RS off: %.4f vs %.4f (tie: %s); RS on: text %.4f, distractor %.4f", off[0].score,
              off[1].score, tie ? "yes" : "no", on[0].mask.at(10, 10) ? on[0].score : on[1].score,
              on[0].mask.at(10, 10) ? on[1].score : on[0].score)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ctxdet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome determinism() {
  test::TempDir dir;
  const fs::path cfg = dir.path() / "run.cfg";
  std::ofstream(cfg) << "data.dir = " << (dir.path() / "data").string() << "\n"
                     << "data.train_count = 8\ndata.test_count = 4\n"
                     << "train.max_iter = 40\ntrain.batch_size = 2\n";
  if (run_cli({"synth", "--config", cfg.string(), "--out", (dir.path() / "data").string()}) != 0) {
    return {false, "synth failed"};
  }
  for (const char* run : {"a", "b"}) {
    const fs::path out = dir.path() / run;
    if (run_cli({"train", "--config", cfg.string(), "--out", (out / "train").string(), "--seed",
                 "3"}) != 0 ||
        run_cli({"eval", "--config", cfg.string(), "--out", (out / "eval").string(),
                 "--checkpoint", (out / "train" / "model.ckpt").string()}) != 0) {
      return {false, std::string("run ") + run + " failed"};
    }
  }
  const auto a = dir.path() / "a", b = dir.path() / "b";
  const bool ckpt = slurp(a / "train/model.ckpt") == slurp(b / "train/model.ckpt");
  const bool log = slurp(a / "train/metrics.log") == slurp(b / "train/metrics.log");
  const bool report = slurp(a / "eval/report.kv") == slurp(b / "eval/report.kv") &&
                      slurp(a / "eval/report.txt") == slurp(b / "eval/report.txt");
  return {ckpt && log && report,
          fmt("checkpoints identical: %s, metrics logs identical: %s, eval reports identical: %s",
              ckpt ? "yes" : "no", log ? "yes" : "no", report ? "yes" : "no")};
}

Outcome desk_ablation() {
  const auto t0 = Clock::now();
  test::TempDir dir;
  RunConfig cfg;
  cfg.data.dir = dir.path() / "data";
  std::ostringstream log;
  cli::synthesize(cfg, cfg.data.dir, log);
  const AblationTable t = cli::run_ablation(cfg, dir.path() / "ablate", std::cerr);
  const double minutes = seconds_since(t0) / 60;
  std::cout << format_ablation_text(t);

  const Prf& base = t.row(kBaselineRow).median;
  const Prf& rs = t.row(kTcmRsRow).median;
  const std::size_t params = Detector(cfg.model, 1).parameters().scalar_count();
  const double recall_delta = 100 * (rs.recall - base.recall);
  const bool pass = rs.precision > base.precision && rs.f >= base.f &&
                    std::abs(recall_delta) <= 3.0 && minutes < 45 && params <= 200000;
  return {pass, fmt("median P %.2f -> %.2f (must rise), F %.2f -> %.2f (must not drop), "
                    "recall delta %+.2f pts (|d|<=3), %.1f min (<45), %zu params (<=200000)",
                    100 * base.precision, 100 * rs.precision, 100 * base.f, 100 * rs.f,
                    recall_delta, minutes, params)};
}

}  // namespace
}  // namespace ctxdet

int main(int argc, char** argv) {
  using namespace ctxdet;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"formula oracles", formula_oracles},
      {"gradient suite", gradient_suite},
      {"saliency invariants", saliency_invariants},
      {"geometry oracles", geometry_oracles},
      {"evaluation arithmetic", evaluation_arithmetic},
      {"schedule exactness", schedule_exactness},
      {"desk-scale ablation", desk_ablation},
      {"re-score behaviour", rescore_behavior},
      {"determinism", determinism}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion " << argv[i] << '\n';
      return 2;
    }
    selected.insert(k);
  }
  if (selected.empty())
    for (std::size_t k = 1; k <= criteria.size(); ++k) selected.insert(int(k));

  int failed = 0;
  for (int k : selected) {
    const auto& [name, check] = criteria[k - 1];
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << k << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
