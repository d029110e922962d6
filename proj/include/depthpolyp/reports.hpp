// Copyright 2026 The DepthPolyp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// CSV reports with JSON-lines mirrors, the degraded-corpus manifest and the
// training manifest.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthpolyp/accounting.hpp"
#include "depthpolyp/bench.hpp"
#include "depthpolyp/config.hpp"
#include "depthpolyp/degrade.hpp"
#include "depthpolyp/metrics.hpp"
#include "depthpolyp/quadrant.hpp"
#include "depthpolyp/trainer.hpp"

namespace depthpolyp {

using Json = nlohmann::ordered_json;

/// Column-ordered table written as `<stem>.csv` and `<stem>.jsonl`.
struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;

  void add(std::vector<Json> row) {
    if (row.size() != columns.size()) throw UsageError("report row has " + std::to_string(row.size()) + " cells");
    rows.push_back(std::move(row));
  }
};

namespace detail {

inline std::string csv_cell(const Json& v) {
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  return v.dump();
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

}  // namespace detail

inline void write_report(const ReportTable& t, const std::filesystem::path& stem) {
  auto csv = detail::open_out(std::filesystem::path(stem).concat(".csv"));
  auto jsonl = detail::open_out(std::filesystem::path(stem).concat(".jsonl"));
  for (std::size_t i = 0; i < t.columns.size(); ++i) csv << (i ? "," : "") << t.columns[i];
  csv << "\n";
  for (const auto& row : t.rows) {
    Json obj = Json::object();
    for (std::size_t i = 0; i < row.size(); ++i) {
      csv << (i ? "," : "") << detail::csv_cell(row[i]);
      obj[t.columns[i]] = row[i];
    }
    csv << "\n";
    jsonl << obj.dump() << "\n";
  }
}

inline ReportTable metric_table(const MetricReport& r) {
  ReportTable t{{"id", "dice", "iou", "recall", "threshold"}, {}};
  for (std::size_t i = 0; i < r.count(); ++i) {
    t.add({r.ids[i], r.per_sample[i].dice, r.per_sample[i].iou, r.per_sample[i].recall, r.threshold});
  }
  t.add({"mean", r.mean.dice, r.mean.iou, r.mean.recall, r.threshold});
  return t;
}

inline ReportTable quadrant_table(const QuadrantReport& q) {
  ReportTable t{{"train", "test", "count", "threshold", "dice", "iou", "recall", "delta_r", "delta_h"}, {}};
  for (Condition train : {Condition::clean, Condition::noisy}) {
    for (Condition test : {Condition::clean, Condition::noisy}) {
      const auto& r = q.at(train, test);
      t.add({to_string(train), to_string(test), r.count(), r.threshold, r.mean.dice, r.mean.iou, r.mean.recall,
             q.delta_r(), q.delta_h()});
    }
  }
  return t;
}

/// MAC conventions go in the first row's group column so the table stays
/// self-describing; totals close the table.
inline ReportTable cost_table(const CostTable& c, std::size_t h, std::size_t w) {
  ReportTable t{{"layer", "group", "params", "macs"}, {}};
  for (const auto& r : c.rows) t.add({r.name, r.group, r.params, r.macs});
  t.add({"total@" + std::to_string(h) + "x" + std::to_string(w),
         "conv=Cout*Cin/g*K^2*Ho*Wo; upsample=4/px; bn,act,pool=0", c.total_params(), c.total_macs()});
  return t;
}

inline ReportTable bench_table(const std::vector<BenchResult>& results) {
  ReportTable t{{"input_size", "iters", "mean_fps", "std_fps", "cv"}, {}};
  for (const auto& r : results) t.add({r.input_size, r.iters, r.mean_fps, r.std_fps, r.cv()});
  return t;
}

inline ReportTable training_log_table(const std::vector<LogEntry>& log) {
  ReportTable t{{"step", "epoch", "loss", "seg_loss", "depth_loss", "s_seg", "s_depth", "lr"}, {}};
  for (const auto& e : log) t.add({e.step, e.epoch, e.loss, e.seg_loss, e.depth_loss, e.s_seg, e.s_depth, e.lr});
  return t;
}

// ---------------------------------------------------------------------------
// Degraded-corpus manifest: one JSON object per sample with its id, corpus
// index, pipeline seed and every fired operator with its drawn parameters.

struct ManifestEntry {
  std::string id;
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::vector<AppliedOp> ops;
};

inline Json to_json(const ManifestEntry& e) {
  Json ops = Json::array();
  for (const auto& op : e.ops) {
    Json params = Json::object();
    for (const auto& [k, v] : op.params) params[k] = v;
    ops.push_back({{"name", op.name}, {"params", params}});
  }
  return {{"id", e.id}, {"index", e.index}, {"seed", e.seed}, {"ops", ops}};
}

inline ManifestEntry manifest_entry_from_json(const Json& j) {
  try {
    ManifestEntry e{j.at("id").get<std::string>(), j.at("index").get<std::uint64_t>(), j.at("seed").get<std::uint64_t>(), {}};
    for (const auto& op : j.at("ops")) {
      AppliedOp a{op.at("name").get<std::string>(), {}};
      for (const auto& [k, v] : op.at("params").items()) a.params.emplace_back(k, v.get<double>());
      e.ops.push_back(std::move(a));
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed manifest entry: ") + ex.what());
  }
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  auto out = detail::open_out(path);
  for (const auto& e : entries) out << to_json(e).dump() << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest not found: " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    out.push_back(manifest_entry_from_json(j));
  }
  return out;
}

/// Degrades `clean` with `spec`, returning the noisy corpus (ids unchanged)
/// and its manifest.
inline std::pair<std::vector<Sample>, std::vector<ManifestEntry>> materialize_noisy(
    const DegradationSpec& spec, const std::vector<Sample>& clean, std::uint64_t seed, std::size_t threads = 1) {
  auto degraded = degrade_corpus(spec, clean, seed, threads);
  std::vector<Sample> noisy;
  std::vector<ManifestEntry> manifest;
  for (std::size_t i = 0; i < degraded.size(); ++i) {
    noisy.push_back(std::move(degraded[i].noisy));
    manifest.push_back({clean[i].id, i, seed, std::move(degraded[i].ops)});
  }
  return {std::move(noisy), std::move(manifest)};
}

/// Rebuilds the noisy corpus from the clean one using only the recorded
/// operator parameters (no generator draws). Entries are matched by id.
inline std::vector<Sample> replay_manifest(const std::vector<Sample>& clean, const std::vector<ManifestEntry>& manifest) {
  std::vector<Sample> out;
  for (const auto& e : manifest) {
    auto it = std::find_if(clean.begin(), clean.end(), [&](const Sample& s) { return s.id == e.id; });
    if (it == clean.end()) throw DataError("manifest references unknown sample " + e.id);
    Sample s = *it;
    apply_operators(s, e.ops);
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_training_manifest(const std::filesystem::path& path, const RunConfig& cfg, Condition condition,
                                    const TrainResult& result) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  Json j = {{"condition", to_string(condition)},
            {"seed", cfg.train.seed},
            {"config_hash", hash},
            {"steps", result.steps},
            {"final_loss", result.log.empty() ? Json(nullptr) : Json(result.log.back().loss)},
            {"config", format_config(cfg)}};
  auto out = detail::open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace depthpolyp
