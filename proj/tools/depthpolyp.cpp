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

// depthpolyp command-line front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "depthpolyp/accounting.hpp"
#include "depthpolyp/bench.hpp"
#include "depthpolyp/checkpoint.hpp"
#include "depthpolyp/config.hpp"
#include "depthpolyp/dataset.hpp"
#include "depthpolyp/metrics.hpp"
#include "depthpolyp/quadrant.hpp"
#include "depthpolyp/reports.hpp"
#include "depthpolyp/trainer.hpp"

namespace fs = std::filesystem;
using namespace depthpolyp;

namespace {

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

void print_metrics(const std::string& label, const MetricReport& r) {
  std::printf("%-16s n=%-4zu dice=%.4f iou=%.4f recall=%.4f\n", label.c_str(), r.count(), r.mean.dice, r.mean.iou,
              r.mean.recall);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DepthPolyp: depth-guided polyp segmentation toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a procedural polyp dataset");
  std::string synth_out;
  std::size_t synth_count = 256, synth_size = 64;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of samples")->capture_default_str();
  synth->add_option("--size", synth_size, "Image side, multiple of 32")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();

  // degrade
  auto* degrade = app.add_subcommand("degrade", "Materialise a degraded copy of a dataset plus its manifest");
  std::string degrade_in, degrade_out, degrade_config;
  std::uint64_t degrade_seed = 3;
  std::size_t degrade_threads = 1;
  degrade->add_option("--in", degrade_in, "Clean dataset directory")->required();
  degrade->add_option("--out", degrade_out, "Output directory")->required();
  degrade->add_option("--seed", degrade_seed, "Pipeline seed")->capture_default_str();
  degrade->add_option("--config", degrade_config, "Config file (degrade.* keys)");
  degrade->add_option("--threads", degrade_threads, "Worker threads")->capture_default_str();

  // replay
  auto* replay = app.add_subcommand("replay", "Rebuild a degraded dataset from a clean one and a manifest");
  std::string replay_in, replay_manifest_path, replay_out;
  replay->add_option("--in", replay_in, "Clean dataset directory")->required();
  replay->add_option("--manifest", replay_manifest_path, "manifest.jsonl")->required();
  replay->add_option("--out", replay_out, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a clean or online-degraded dataset");
  std::string train_condition = "clean", train_config, train_data, train_out;
  std::uint64_t train_seed = 0;
  train_cmd->add_option("--condition", train_condition, "clean or noisy")->capture_default_str();
  train_cmd->add_option("--config", train_config, "Config file");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Overrides train.seed");
  train_cmd->add_option("--data", train_data, "Training dataset directory")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_set, eval_out;
  double eval_threshold = kDefaultThreshold;
  std::size_t eval_threads = 1;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--testset", eval_set, "Dataset directory")->required();
  eval->add_option("--threshold", eval_threshold, "Probability threshold")->capture_default_str();
  eval->add_option("--threads", eval_threads, "Worker threads")->capture_default_str();
  eval->add_option("--out", eval_out, "Report path stem (writes .csv and .jsonl)");

  // quadrant
  auto* quadrant = app.add_subcommand("quadrant", "Four-way clean/noisy evaluation with delta_r and delta_h");
  QuadrantPaths qpaths;
  std::string quadrant_out;
  double quadrant_threshold = kDefaultThreshold;
  std::size_t quadrant_threads = 1;
  quadrant->add_option("--clean-ckpt", qpaths.clean_checkpoint, "Clean-trained checkpoint")->required();
  quadrant->add_option("--noisy-ckpt", qpaths.noisy_checkpoint, "Noisy-trained checkpoint")->required();
  quadrant->add_option("--clean-set", qpaths.clean_set, "Clean test dataset")->required();
  quadrant->add_option("--noisy-set", qpaths.noisy_set, "Degraded test dataset")->required();
  quadrant->add_option("--threshold", quadrant_threshold, "Probability threshold")->capture_default_str();
  quadrant->add_option("--threads", quadrant_threads, "Worker threads")->capture_default_str();
  quadrant->add_option("--out", quadrant_out, "Report path stem");

  // count
  auto* count = app.add_subcommand("count", "Per-layer parameter and MAC table");
  std::string count_config, count_out;
  std::size_t count_size = 0;
  count->add_option("--config", count_config, "Config file (network.* keys)");
  count->add_option("--size", count_size, "Input side (defaults to network.input_size)");
  count->add_option("--out", count_out, "Report path stem");

  // bench
  auto* bench = app.add_subcommand("bench", "Batch-1 forward throughput");
  std::string bench_ckpt, bench_config, bench_out;
  std::vector<std::size_t> bench_sizes{64, 224};
  std::size_t bench_iters = 100, bench_warmup = 10;
  bench->add_option("--checkpoint", bench_ckpt, "Checkpoint (default: freshly initialised model)");
  bench->add_option("--config", bench_config, "Config file when no checkpoint is given");
  bench->add_option("--sizes", bench_sizes, "Input sides")->delimiter(',')->capture_default_str();
  bench->add_option("--iters", bench_iters, "Timed iterations")->capture_default_str();
  bench->add_option("--warmup", bench_warmup, "Untimed warm-up iterations")->capture_default_str();
  bench->add_option("--out", bench_out, "Report path stem");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      save_dataset(synth_out, synth_dataset(synth_count, synth_size, synth_seed));
      std::printf("wrote %zu samples to %s\n", synth_count, synth_out.c_str());
    } else if (*degrade) {
      const RunConfig cfg = config_or_default(degrade_config);
      const auto clean = load_dataset(degrade_in);
      auto [noisy, manifest] = materialize_noisy(cfg.degrade, clean, degrade_seed, degrade_threads);
      save_dataset(degrade_out, noisy);
      write_manifest(fs::path(degrade_out) / "manifest.jsonl", manifest);
      std::printf("wrote %zu degraded samples and manifest to %s\n", noisy.size(), degrade_out.c_str());
    } else if (*replay) {
      const auto clean = load_dataset(replay_in);
      const auto manifest = read_manifest(replay_manifest_path);
      save_dataset(replay_out, replay_manifest(clean, manifest));
      std::printf("replayed %zu samples to %s\n", manifest.size(), replay_out.c_str());
    } else if (*train_cmd) {
      RunConfig cfg = config_or_default(train_config);
      if (*seed_opt) cfg.train.seed = train_seed;
      const Condition condition = parse_condition(train_condition);
      const auto data = load_dataset(train_data);
      DepthPolyp<float> model(cfg.network, cfg.train.seed);
      const fs::path out(train_out);
      fs::create_directories(out);
      std::size_t every = 0;
      auto result = train(model, data, condition, cfg.train, cfg.degrade, [&](const LogEntry& e) {
        if (++every % 50 == 0) {
          std::printf("step %6zu  epoch %3zu  loss % .4f  seg %.4f  depth %.4f  s_seg % .3f  s_depth % .3f  lr %.2e\n",
                      e.step, e.epoch, e.loss, e.seg_loss, e.depth_loss, e.s_seg, e.s_depth, e.lr);
          std::fflush(stdout);
        }
      });
      save_model(model, out / "model.ckpt");
      write_report(training_log_table(result.log), out / "train_log");
      write_training_manifest(out / "training_manifest.json", cfg, condition, result);
      std::printf("trained %zu steps (%s); checkpoint %s\n", result.steps, to_string(condition),
                  (out / "model.ckpt").c_str());
    } else if (*eval) {
      auto model = load_model(eval_ckpt);
      const auto data = load_dataset(eval_set);
      const auto report = evaluate(model, data, eval_threshold, 16, eval_threads);
      print_metrics(eval_set, report);
      if (!eval_out.empty()) write_report(metric_table(report), eval_out);
    } else if (*quadrant) {
      const auto q = quadrant_eval(qpaths, quadrant_threshold, quadrant_threads);
      for (Condition tr : {Condition::clean, Condition::noisy})
        for (Condition te : {Condition::clean, Condition::noisy})
          print_metrics(std::string(to_string(tr)) + "->" + to_string(te), q.at(tr, te));
      std::printf("delta_r % .4f\ndelta_h % .4f\n", q.delta_r(), q.delta_h());
      if (!quadrant_out.empty()) write_report(quadrant_table(q), quadrant_out);
    } else if (*count) {
      const RunConfig cfg = config_or_default(count_config);
      const std::size_t s = count_size ? count_size : cfg.network.input_height;
      const auto table = count_costs(cfg.network, s, s);
      for (const auto& r : table.rows) std::printf("%-34s %10llu %14llu\n", r.name.c_str(),
                                                   static_cast<unsigned long long>(r.params), static_cast<unsigned long long>(r.macs));
      std::printf("%-34s %10llu %14llu  (%.4f GMACs at %zux%zu)\n", "total", static_cast<unsigned long long>(table.total_params()),
                  static_cast<unsigned long long>(table.total_macs()), table.gmacs(), s, s);
      if (!count_out.empty()) write_report(cost_table(table, s, s), count_out);
    } else if (*bench) {
      DepthPolyp<float> model = bench_ckpt.empty() ? DepthPolyp<float>(config_or_default(bench_config).network, 0)
                                                   : load_model(bench_ckpt);
      std::vector<BenchResult> results;
      for (std::size_t s : bench_sizes) {
        results.push_back(bench_fps(model, s, bench_warmup, bench_iters));
        const auto& r = results.back();
        std::printf("%4zux%-4zu fps %.2f +- %.2f (cv %.3f, %zu iters)\n", s, s, r.mean_fps, r.std_fps, r.cv(), r.iters);
      }
      if (!bench_out.empty()) write_report(bench_table(results), bench_out);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
