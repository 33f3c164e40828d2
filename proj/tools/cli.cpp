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

#include "cli.hpp"

#include <chrono>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ctxdet/checkpoint.hpp"
#include "ctxdet/dataio.hpp"
#include "ctxdet/inference.hpp"
#include "ctxdet/trainer.hpp"

namespace ctxdet::cli {
namespace {

constexpr const char* kVersion = "0.1.0";

/// Raised for problems the user can fix (bad flags, missing files).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string replace_seed(std::string pattern, std::uint64_t seed) {
  const std::string token = "{seed}";
  for (auto pos = pattern.find(token); pos != std::string::npos; pos = pattern.find(token)) {
    pattern.replace(pos, token.size(), std::to_string(seed));
  }
  return pattern;
}

std::vector<Sample> load_split(const std::filesystem::path& manifest) {
  if (!std::filesystem::exists(manifest)) {
    throw UsageError("dataset manifest " + manifest.string() +
                     " not found (run 'ctxdet synth' first or set data.dir)");
  }
  return load_dataset(manifest);
}

Detector load_model(const std::filesystem::path& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  if (!std::filesystem::exists(path)) throw UsageError("checkpoint " + path.string() + " not found");
  return load_checkpoint(path);
}

TrainOutputs train_outputs(const std::filesystem::path& dir, std::ostream& log,
                           const std::string& tag) {
  TrainOutputs o;
  o.checkpoint = dir / "model.ckpt";
  o.metrics_log = dir / "metrics.log";
  o.on_log = [&log, tag](const MetricsRow& row) {
    log << tag << format_metrics_row(row) << '\n' << std::flush;
  };
  return o;
}

bool resolve_rescore(const std::optional<std::string>& flag, const RunConfig& cfg,
                     const Detector& model) {
  if (!flag) return cfg.inference.rescore && model.config().tcm;
  const bool on = *flag == "on";
  if (on && !model.config().tcm) {
    throw UsageError("--rs on needs a checkpoint trained with the text context module");
  }
  return on;
}

void write_instances(const EvalRun& run, const std::filesystem::path& dir) {
  ensure_dir(dir);
  for (std::size_t i = 0; i < run.names.size(); ++i) {
    write_detections(run.detections[i], dir / (run.names[i] + ".txt"));
  }
}

std::vector<Detection> as_detections(const std::vector<TextInstance>& instances) {
  std::vector<Detection> out;
  for (const TextInstance& t : instances) out.push_back({t.polygon, t.score});
  return out;
}

EvalReport score_runs(const std::vector<std::string>& names,
                      const std::vector<std::vector<TextInstance>>& instances,
                      const std::vector<Sample>& samples, double iou_threshold) {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Annotation>> gt;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    dets.push_back(as_detections(instances[i]));
    gt.push_back(samples[i].annotations);
  }
  return evaluate(names, dets, gt, iou_threshold);
}

}  // namespace

std::string format_run_manifest(const RunManifest& m, const RunConfig& config) {
  std::ostringstream out;
  out << "# ctxdet run manifest\n"
      << "# command: " << m.command << '\n'
      << "# config: " << (m.config_path.empty() ? "<defaults>" : m.config_path.string()) << '\n'
      << "# seed: " << m.seed << '\n'
      << "# version: " << kVersion << " (checkpoint format " << kCheckpointFormatVersion << ")\n"
      << "# out: " << m.out_dir.string() << '\n'
      << format_run_config(config);
  return out.str();
}

void write_run_manifest(const RunManifest& manifest, const RunConfig& config) {
  ensure_dir(manifest.out_dir);
  write_text(manifest.out_dir / "run_manifest.txt", format_run_manifest(manifest, config));
}

void synthesize(const RunConfig& config, const std::filesystem::path& dir, std::ostream& log) {
  const struct {
    const char* split;
    std::size_t count;
    std::uint64_t seed;
  } splits[] = {{"train", config.data.train_count, config.data.train_seed},
                {"test", config.data.test_count, config.data.test_seed}};
  for (const auto& s : splits) {
    const auto specs = make_scene_specs(config.scene, s.count, s.seed, config.data.min_side,
                                        config.data.max_side);
    ensure_dir(dir / s.split);
    const Manifest m = write_dataset(specs, dir / s.split);
    log << s.split << ": " << m.entries.size() << " images -> " << (dir / s.split).string()
        << '\n';
  }
}

EvalRun evaluate_model(const Detector& model, const std::vector<Sample>& samples,
                       const InferenceConfig& inference, bool rescore, double iou_threshold) {
  InferenceConfig cfg = inference;
  cfg.rescore = rescore;
  EvalRun run;
  for (const Sample& s : samples) {
    run.names.push_back(s.name);
    run.detections.push_back(detect(model, s.image, cfg));
  }
  run.report = score_runs(run.names, run.detections, samples, iou_threshold);
  return run;
}

AblationTable run_ablation(const RunConfig& config, const std::filesystem::path& out,
                           std::ostream& log) {
  const std::vector<Sample> train_set = load_split(config.data.train_manifest());
  const std::vector<Sample> test_set = load_split(config.data.test_manifest());
  std::vector<AblationRun> runs;
  for (std::uint64_t seed : config.ablate.seeds) {
    const std::filesystem::path seed_dir = out / ("seed" + std::to_string(seed));
    ensure_dir(seed_dir);
    auto obtain = [&](bool tcm, const std::string& precomputed, const char* tag) {
      if (!precomputed.empty()) {
        const std::filesystem::path p = replace_seed(precomputed, seed);
        log << "seed " << seed << ' ' << tag << ": loading " << p.string() << '\n';
        return load_model(p);
      }
      TrainConfig t = config.train;
      t.seed = seed;
      ModelConfig m = config.model;
      m.tcm = tcm;
      const auto start = std::chrono::steady_clock::now();
      TrainResult r = train(train_set, t, m, train_outputs(seed_dir / tag, log,
                                                           "seed " + std::to_string(seed) + " " +
                                                               tag + ": "));
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                              .count();
      log << "seed " << seed << ' ' << tag << ": trained in " << secs << " s\n";
      return std::move(r.model);
    };
    const Detector baseline = obtain(false, config.ablate.baseline_checkpoint, "baseline");
    const Detector with_tcm = obtain(true, config.ablate.tcm_checkpoint, "tcm");
    if (baseline.config().tcm || !with_tcm.config().tcm) {
      throw UsageError("ablation checkpoints: baseline must have the text context module off "
                       "and the +TCM checkpoint must have it on");
    }

    const EvalRun base_run = evaluate_model(baseline, test_set, config.inference, false,
                                            config.eval.iou_threshold);
    // +TCM and +TCM+RS share the checkpoint and the candidate set; only the
    // scoring stage differs.
    std::vector<std::string> names;
    std::vector<std::vector<TextInstance>> rs_off, rs_on;
    for (const Sample& s : test_set) {
      const Candidates c = detect_candidates(with_tcm, s.image, config.inference);
      names.push_back(s.name);
      rs_off.push_back(finalize(c, config.inference, RescoreMode::kOff));
      rs_on.push_back(finalize(c, config.inference, RescoreMode::kOn));
    }
    const EvalReport off_report = score_runs(names, rs_off, test_set, config.eval.iou_threshold);
    const EvalReport on_report = score_runs(names, rs_on, test_set, config.eval.iou_threshold);
    write_report(base_run.report, seed_dir / "eval_baseline");
    write_report(off_report, seed_dir / "eval_tcm");
    write_report(on_report, seed_dir / "eval_tcm_rs");
    runs.push_back({kBaselineRow, seed, base_run.report.scores});
    runs.push_back({kTcmRow, seed, off_report.scores});
    runs.push_back({kTcmRsRow, seed, on_report.scores});
    for (const AblationRun& r : std::span(runs).last(3)) {
      log << "seed " << seed << ' ' << r.row << ": P=" << r.scores.precision
          << " R=" << r.scores.recall << " F=" << r.scores.f << '\n';
    }
  }
  const AblationTable table = ablation_table(runs);
  write_text(out / "ablation.txt", format_ablation_text(table));
  write_text(out / "ablation.kv", format_ablation_kv(table));
  return table;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ctxdet: scene text detection with a text context module and re-scoring"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string checkpoint;
  std::string detections_dir;
  std::string input;
  bool dump_segmap = false;
  std::optional<std::string> rs;
  std::optional<std::string> tcm;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", out_dir, "output directory")->required();
  };
  auto* synth = app.add_subcommand("synth", "generate the synthetic train/test corpus");
  common(synth);
  auto* train_cmd = app.add_subcommand("train", "train a detector");
  common(train_cmd);
  train_cmd->add_option("--tcm", tcm, "text context module")->check(CLI::IsMember({"on", "off"}));
  auto* eval_cmd = app.add_subcommand("eval", "evaluate on the test split");
  common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "trained model");
  eval_cmd->add_option("--detections", detections_dir,
                       "score existing detection files (<image name>.txt) instead of a model");
  eval_cmd->add_option("--rs", rs, "re-scoring")->check(CLI::IsMember({"on", "off"}));
  auto* infer_cmd = app.add_subcommand("infer", "write detections for a dataset");
  common(infer_cmd);
  infer_cmd->add_option("--checkpoint", checkpoint, "trained model")->required();
  infer_cmd->add_option("--input", input, "manifest.tsv (default: the test split)");
  infer_cmd->add_flag("--dump-segmap", dump_segmap, "also write the text probability map (PGM)");
  infer_cmd->add_option("--rs", rs, "re-scoring")->check(CLI::IsMember({"on", "off"}));
  auto* ablate_cmd = app.add_subcommand("ablate", "Baseline / +TCM / +TCM+RS over seeds");
  common(ablate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUserError;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) {
      if (command == "synth") {
        cfg.data.train_seed = *seed;
        cfg.data.test_seed = *seed + 1000000;
      } else if (command == "ablate") {
        cfg.ablate.seeds = {*seed};
      } else {
        cfg.train.seed = *seed;
      }
    }
    if (tcm) cfg.model.tcm = *tcm == "on";
    cfg.validate();
    const std::filesystem::path out_path(out_dir);
    write_run_manifest({command, config_path, seed.value_or(cfg.train.seed), out_path}, cfg);

    if (command == "synth") {
      synthesize(cfg, out_path, out);
    } else if (command == "train") {
      const std::vector<Sample> data = load_split(cfg.data.train_manifest());
      train(data, cfg.train, cfg.model, train_outputs(out_path, out, ""));
      out << "checkpoint: " << (out_path / "model.ckpt").string() << '\n';
    } else if (command == "eval") {
      const std::vector<Sample> test = load_split(cfg.data.test_manifest());
      EvalReport report;
      if (!detections_dir.empty()) {
        std::vector<std::string> names;
        std::vector<std::vector<Detection>> dets;
        std::vector<std::vector<Annotation>> gt;
        for (const Sample& s : test) {
          const auto file = std::filesystem::path(detections_dir) / (s.name + ".txt");
          if (!std::filesystem::exists(file)) throw UsageError("missing detections " + file.string());
          names.push_back(s.name);
          dets.push_back(read_detections(file));
          gt.push_back(s.annotations);
        }
        report = evaluate(names, dets, gt, cfg.eval.iou_threshold);
      } else {
        const Detector model = load_model(checkpoint);
        const EvalRun r = evaluate_model(model, test, cfg.inference,
                                         resolve_rescore(rs, cfg, model), cfg.eval.iou_threshold);
        write_instances(r, out_path / "detections");
        report = r.report;
      }
      write_report(report, out_path);
      const std::string text = format_report_text(report);
      out << text.substr(0, text.find("\n\n") + 1);
    } else if (command == "infer") {
      const Detector model = load_model(checkpoint);
      InferenceConfig ic = cfg.inference;
      ic.rescore = resolve_rescore(rs, cfg, model);
      if (dump_segmap && !model.config().tcm) {
        throw UsageError("--dump-segmap needs a checkpoint with the text context module");
      }
      const std::vector<Sample> samples =
          load_split(input.empty() ? cfg.data.test_manifest() : std::filesystem::path(input));
      ensure_dir(out_path / "detections");
      if (dump_segmap) ensure_dir(out_path / "segmaps");
      std::size_t total = 0;
      for (const Sample& s : samples) {
        const Candidates c = detect_candidates(model, s.image, ic);
        const auto inst =
            finalize(c, ic, ic.rescore ? RescoreMode::kOn : RescoreMode::kOff);
        write_detections(inst, out_path / "detections" / (s.name + ".txt"));
        if (dump_segmap) {
          write_seg_map(c.seg_probabilities, s.image.height, s.image.width,
                        out_path / "segmaps" / (s.name + ".pgm"));
        }
        total += inst.size();
      }
      out << samples.size() << " images, " << total << " detections\n";
    } else if (command == "ablate") {
      const AblationTable table = run_ablation(cfg, out_path, out);
      out << format_ablation_text(table);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUserError;
}

}  // namespace ctxdet::cli
