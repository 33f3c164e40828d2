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

#include "ctxdet/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ctxdet/image.hpp"

namespace ctxdet {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view s, const std::string& where) {
  s = trim(s);
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ParseError(where + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read detections " + path.string());
  std::vector<Detection> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::vector<double> values;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      values.push_back(parse_double(rest.substr(0, comma), where));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (values.size() < 7 || values.size() % 2 == 0) {
      throw ParseError(where + ": expected x1,y1,...,xN,yN,score with N >= 3");
    }
    std::vector<Point2> pts;
    for (std::size_t i = 0; i + 1 < values.size(); i += 2) pts.push_back({values[i], values[i + 1]});
    try {
      out.push_back({Polygon(std::move(pts)), values.back()});
    } catch (const GeometryError& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return out;
}

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const Annotation> ground_truth, double iou_threshold) {
  MatchResult r;
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  std::vector<bool> taken(ground_truth.size(), false);
  for (std::size_t d : order) {
    std::vector<double> iou(ground_truth.size());
    std::size_t best_any = ground_truth.size();
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      iou[g] = polygon_iou(detections[d].polygon, ground_truth[g].polygon);
      if (best_any == ground_truth.size() || iou[g] > iou[best_any]) best_any = g;
    }
    if (best_any < ground_truth.size() && ground_truth[best_any].ignore &&
        iou[best_any] >= iou_threshold) {
      r.excluded.push_back(d);
      continue;
    }
    std::size_t best = ground_truth.size();
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (ground_truth[g].ignore || taken[g]) continue;
      if (best == ground_truth.size() || iou[g] > iou[best]) best = g;
    }
    if (best < ground_truth.size() && iou[best] >= iou_threshold) {
      taken[best] = true;
      r.matches.emplace_back(d, best);
    } else {
      ++r.false_positives;
    }
  }
  r.true_positives = r.matches.size();
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    if (!ground_truth[g].ignore && !taken[g]) ++r.false_negatives;
  }
  return r;
}

double f_measure(double precision, double recall) {
  const double s = precision + recall;
  return s > 0 ? 2.0 * precision * recall / s : 0.0;
}

Prf prf(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf out;
  out.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
  out.f = f_measure(out.precision, out.recall);
  return out;
}

EvalReport evaluate(std::span<const std::string> names,
                    std::span<const std::vector<Detection>> detections,
                    std::span<const std::vector<Annotation>> ground_truth, double iou_threshold) {
  if (names.size() != detections.size() || names.size() != ground_truth.size()) {
    throw std::invalid_argument("evaluate: names, detections and ground truth differ in length");
  }
  EvalReport report;
  for (std::size_t i = 0; i < names.size(); ++i) {
    ImageEval e{names[i], match_detections(detections[i], ground_truth[i], iou_threshold)};
    report.true_positives += e.match.true_positives;
    report.false_positives += e.match.false_positives;
    report.false_negatives += e.match.false_negatives;
    report.images.push_back(std::move(e));
  }
  report.scores = prf(report.true_positives, report.false_positives, report.false_negatives);
  return report;
}

std::string format_report_text(const EvalReport& r) {
  std::ostringstream out;
  out << "images     " << r.images.size() << '\n'
      << "precision  " << fixed4(r.scores.precision) << '\n'
      << "recall     " << fixed4(r.scores.recall) << '\n'
      << "f_measure  " << fixed4(r.scores.f) << '\n'
      << "tp/fp/fn   " << r.true_positives << " / " << r.false_positives << " / "
      << r.false_negatives << "\n\n";
  out << "# image tp fp fn excluded\n";
  for (const ImageEval& e : r.images) {
    out << e.name << ' ' << e.match.true_positives << ' ' << e.match.false_positives << ' '
        << e.match.false_negatives << ' ' << e.match.excluded.size() << '\n';
  }
  return out.str();
}

std::string format_report_kv(const EvalReport& r) {
  std::ostringstream out;
  out << "precision = " << fixed4(r.scores.precision) << '\n'
      << "recall = " << fixed4(r.scores.recall) << '\n'
      << "f_measure = " << fixed4(r.scores.f) << '\n'
      << "true_positives = " << r.true_positives << '\n'
      << "false_positives = " << r.false_positives << '\n'
      << "false_negatives = " << r.false_negatives << '\n'
      << "images = " << r.images.size() << '\n';
  return out.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  for (const auto& [name, text] : {std::pair{"report.txt", format_report_text(report)},
                                   std::pair{"report.kv", format_report_kv(report)}}) {
    std::ofstream out(directory / name, std::ios::trunc);
    if (!out) throw IoError("cannot write " + (directory / name).string());
    out << text;
  }
}

const AblationRow& AblationTable::row(const std::string& name) const {
  for (const AblationRow& r : rows) {
    if (r.name == name) return r;
  }
  throw std::invalid_argument("ablation table has no row '" + name + "'");
}

AblationTable ablation_table(std::span<const AblationRun> runs) {
  AblationTable table;
  for (const char* name : {kBaselineRow, kTcmRow, kTcmRsRow}) {
    AblationRow row{name, {}, {}, {}};
    for (const AblationRun& run : runs) {
      if (run.row != name) continue;
      row.seeds.push_back(run.seed);
      row.per_seed.push_back(run.scores);
    }
    if (row.per_seed.empty()) {
      throw std::invalid_argument(std::string("ablation: missing configuration '") + name + "'");
    }
    std::vector<double> p, r, f;
    for (const Prf& s : row.per_seed) {
      p.push_back(s.precision);
      r.push_back(s.recall);
      f.push_back(s.f);
    }
    row.median = {median(p), median(r), median(f)};
    table.rows.push_back(std::move(row));
  }
  for (const AblationRun& run : runs) {
    if (run.row != kBaselineRow && run.row != kTcmRow && run.row != kTcmRsRow) {
      throw std::invalid_argument("ablation: unknown configuration '" + run.row + "'");
    }
  }
  return table;
}

std::string format_ablation_text(const AblationTable& table) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %8s %10s %10s  %s\n", "Method", "Recall", "Precision",
                "F-measure", "seeds");
  out << buf;
  for (const AblationRow& row : table.rows) {
    std::string seeds;
    for (auto s : row.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
    std::snprintf(buf, sizeof(buf), "%-10s %8.2f %10.2f %10.2f  %s\n", row.name.c_str(),
                  100 * row.median.recall, 100 * row.median.precision, 100 * row.median.f,
                  seeds.c_str());
    out << buf;
  }
  out << "(medians over seeds, percent)\n";
  return out.str();
}

std::string format_ablation_kv(const AblationTable& table) {
  std::ostringstream out;
  for (const AblationRow& row : table.rows) {
    out << row.name << ".recall = " << fixed4(row.median.recall) << '\n'
        << row.name << ".precision = " << fixed4(row.median.precision) << '\n'
        << row.name << ".f_measure = " << fixed4(row.median.f) << '\n';
    for (std::size_t i = 0; i < row.seeds.size(); ++i) {
      const std::string key = row.name + ".seed" + std::to_string(row.seeds[i]);
      out << key << ".recall = " << fixed4(row.per_seed[i].recall) << '\n'
          << key << ".precision = " << fixed4(row.per_seed[i].precision) << '\n'
          << key << ".f_measure = " << fixed4(row.per_seed[i].f) << '\n';
    }
  }
  return out.str();
}

AblationTable parse_ablation_kv(const std::string& text) {
  struct Partial {
    Prf median;
    std::map<std::uint64_t, Prf> seeds;
    bool seen = false;
  };
  std::map<std::string, Partial> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    const std::string where = "ablation kv line " + std::to_string(line_no);
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key(trim(l.substr(0, eq)));
    const double value = parse_double(l.substr(eq + 1), where);
    const auto metric_dot = key.rfind('.');
    if (metric_dot == std::string::npos) throw ParseError(where + ": malformed key '" + key + "'");
    const std::string metric = key.substr(metric_dot + 1);
    std::string head = key.substr(0, metric_dot);
    Prf* target = nullptr;
    const auto seed_pos = head.rfind(".seed");
    if (seed_pos != std::string::npos) {
      const std::string seed_text = head.substr(seed_pos + 5);
      Partial& p = rows[head.substr(0, seed_pos)];
      target = &p.seeds[static_cast<std::uint64_t>(parse_double(seed_text, where))];
    } else {
      Partial& p = rows[head];
      p.seen = true;
      target = &p.median;
    }
    if (metric == "recall") {
      target->recall = value;
    } else if (metric == "precision") {
      target->precision = value;
    } else if (metric == "f_measure") {
      target->f = value;
    } else {
      throw ParseError(where + ": unknown metric '" + metric + "'");
    }
  }
  AblationTable table;
  for (const char* name : {kBaselineRow, kTcmRow, kTcmRsRow}) {
    const auto it = rows.find(name);
    if (it == rows.end() || !it->second.seen) {
      throw ParseError(std::string("ablation kv: missing configuration '") + name + "'");
    }
    AblationRow row{name, {}, {}, it->second.median};
    for (const auto& [seed, scores] : it->second.seeds) {
      row.seeds.push_back(seed);
      row.per_seed.push_back(scores);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace ctxdet
