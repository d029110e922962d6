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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "depthpolyp/bench.hpp"
#include "depthpolyp/checkpoint.hpp"
#include "depthpolyp/config.hpp"
#include "depthpolyp/dataset.hpp"
#include "depthpolyp/metrics.hpp"
#include "depthpolyp/quadrant.hpp"
#include "depthpolyp/reports.hpp"
#include "depthpolyp/trainer.hpp"

namespace depthpolyp {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("depthpolyp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<float> bits(std::initializer_list<int> v) { return std::vector<float>(v.begin(), v.end()); }

TEST(MetricsTest, PerfectDisjointHalf) {
  auto g = bits({1, 1, 0, 0});
  auto m = segmentation_metrics(g, g);
  EXPECT_EQ(m.dice, 1.0);
  EXPECT_EQ(m.iou, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  m = segmentation_metrics(bits({0, 0, 1, 1}), g);
  EXPECT_EQ(m.dice, 0.0);
  EXPECT_EQ(m.iou, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  m = segmentation_metrics(bits({1, 0, 1, 0}), g);
  EXPECT_DOUBLE_EQ(m.dice, 0.5);
  EXPECT_DOUBLE_EQ(m.iou, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
}

TEST(MetricsTest, EmptyConventions) {
  auto m = segmentation_metrics(bits({0, 0, 0}), bits({0, 0, 0}));
  EXPECT_EQ(m.dice, 1.0);
  EXPECT_EQ(m.iou, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  m = segmentation_metrics(bits({1, 0, 0}), bits({0, 0, 0}));
  EXPECT_EQ(m.dice, 0.0);
  EXPECT_EQ(m.iou, 0.0);
  EXPECT_EQ(m.recall, 1.0);
  m = segmentation_metrics(bits({0, 0, 0}), bits({0, 1, 0}));
  EXPECT_EQ(m.dice, 0.0);
  EXPECT_EQ(m.recall, 0.0);
}

TEST(MetricsTest, ThresholdAndValidation) {
  std::vector<float> p{0.5f, 0.51f, 0.2f};
  auto m = segmentation_metrics(p, bits({0, 1, 0}));
  EXPECT_EQ(m.dice, 1.0);
  EXPECT_EQ(segmentation_metrics(p, bits({1, 1, 0}), 0.4).dice, 1.0);
  EXPECT_THROW(segmentation_metrics(p, std::vector<float>{0.5f, 1, 0}), DataError);
  EXPECT_THROW(segmentation_metrics(p, bits({0, 1})), DimensionError);
}

TEST(MetricsTest, DiceIouIdentityOnRandomMasks) {
  std::mt19937 gen(3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<float> p(100), g(100);
    const unsigned dp = gen() % 100 + 1, dg = gen() % 100 + 1;
    for (std::size_t i = 0; i < 100; ++i) {
      p[i] = gen() % 100 < dp ? 1.0f : 0.0f;
      g[i] = gen() % 100 < dg ? 1.0f : 0.0f;
    }
    const auto m = segmentation_metrics(p, g);
    EXPECT_NEAR(m.dice, 2.0 * m.iou / (1.0 + m.iou), 1e-9);
    EXPECT_LE(m.iou, m.dice);
    EXPECT_LE(m.dice, 1.0);
  }
}

TEST(MetricsTest, SummaryIsOrderIndependent) {
  std::vector<std::pair<std::string, Metrics>> rows;
  std::mt19937 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) rows.push_back({"s" + std::to_string(i), {u(gen), u(gen), u(gen)}});
  auto a = summarize(rows, 0.5);
  std::shuffle(rows.begin(), rows.end(), gen);
  auto b = summarize(rows, 0.5);
  EXPECT_EQ(a.mean.dice, b.mean.dice);
  EXPECT_EQ(a.mean.iou, b.mean.iou);
  EXPECT_EQ(a.ids, b.ids);
}

// Four Dice values per model: clean->clean, clean->noisy, noisy->clean,
// noisy->noisy, with the gaps reported alongside them.
struct KnownRow {
  const char* model;
  QuadrantDice dice;
  double delta_r, delta_h;
};

TEST(QuadrantTest, GapArithmeticOnReportedRows) {
  const KnownRow rows[] = {
      {"UNet", {0.8722, 0.6478, 0.8488, 0.8026}, 0.1548, -0.0234},
      {"SegFormer-B0", {0.8971, 0.6962, 0.8964, 0.8228}, 0.1266, -0.0007},
      {"PraNet", {0.9006, 0.7143, 0.8842, 0.8422}, 0.1279, -0.0164},
      {"CFFormer", {0.9053, 0.7556, 0.8901, 0.8402}, 0.0846, -0.0152},
      {"DepthPolyp", {0.9107, 0.8126, 0.8910, 0.8525}, 0.0399, -0.0197},
  };
  for (const auto& r : rows) {
    EXPECT_NEAR(r.dice.delta_r(), r.delta_r, 1e-4) << r.model;
    EXPECT_NEAR(r.dice.delta_h(), r.delta_h, 1e-4) << r.model;
  }
  QuadrantDice same{0.7, 0.7, 0.7, 0.7};
  EXPECT_EQ(same.delta_r(), 0.0);
  EXPECT_EQ(same.delta_h(), 0.0);
}

TEST(QuadrantTest, MissingInputNamesQuadrant) {
  const fs::path dir = scratch_dir("quadrant_missing");
  QuadrantPaths paths{dir / "clean.ckpt", dir / "noisy.ckpt", dir / "clean_set", dir / "noisy_set"};
  try {
    quadrant_eval(paths);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("clean->clean"), std::string::npos);
  }
  DepthPolyp<float> m(NetworkConfig{}, 0);
  save_model(m, paths.clean_checkpoint);
  save_model(m, paths.noisy_checkpoint);
  save_dataset(paths.clean_set, synth_dataset(2, 64, 1));
  try {
    quadrant_eval(paths);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("noisy test corpus"), std::string::npos);
  }
}

TEST(QuadrantTest, EvaluatesFourPairingsConsistently) {
  const fs::path dir = scratch_dir("quadrant_eval");
  DepthPolyp<float> a(NetworkConfig{}, 1), b(NetworkConfig{}, 2);
  auto clean = synth_dataset(4, 64, 5);
  auto [noisy, manifest] = materialize_noisy(DegradationSpec{}, clean, 9);
  QuadrantPaths paths{dir / "a.ckpt", dir / "b.ckpt", dir / "clean", dir / "noisy"};
  save_model(a, paths.clean_checkpoint);
  save_model(b, paths.noisy_checkpoint);
  save_dataset(paths.clean_set, clean);
  save_dataset(paths.noisy_set, noisy);
  auto q = quadrant_eval(paths);
  const auto d = q.dice();
  EXPECT_NEAR(q.delta_r(), d.noisy_noisy - d.clean_noisy, 1e-12);
  EXPECT_NEAR(q.delta_h(), d.noisy_clean - d.clean_clean, 1e-12);
  EXPECT_EQ(q.at(Condition::clean, Condition::noisy).count(), 4u);
}

TEST(SynthTest, DeterministicAndValid) {
  EXPECT_TRUE(synth_dataset(0, 64, 1).empty());
  auto a = synth_dataset(20, 64, 7), b = synth_dataset(20, 64, 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_EQ(a[i].depth, b[i].depth);
    EXPECT_NO_THROW(validate_sample(a[i]));
    float fg = 0.0f;
    for (float v : a[i].mask.data) fg += v;
    EXPECT_GT(fg, 0.0f) << a[i].id;
    EXPECT_EQ(*std::min_element(a[i].depth.data.begin(), a[i].depth.data.end()), 0.0f);
    EXPECT_EQ(*std::max_element(a[i].depth.data.begin(), a[i].depth.data.end()), 1.0f);
  }
  EXPECT_NE(synth_dataset(1, 64, 8)[0].image, a[0].image);
  EXPECT_THROW(synth_dataset(1, 48, 1), ConfigError);
}

TEST(SynthTest, BlobsAreCloserThanSurroundings) {
  // Mean depth inside the mask vs. a 3-px ring just outside it.
  for (const auto& s : synth_dataset(10, 64, 11)) {
    const std::ptrdiff_t n = 64;
    double in = 0.0, ring = 0.0, nin = 0.0, nring = 0.0;
    for (std::ptrdiff_t y = 0; y < n; ++y) {
      for (std::ptrdiff_t x = 0; x < n; ++x) {
        const float d = s.depth.at(0, y, x);
        if (s.mask.at(0, y, x) == 1.0f) {
          in += d;
          ++nin;
          continue;
        }
        bool near = false;
        for (std::ptrdiff_t dy = -3; dy <= 3 && !near; ++dy)
          for (std::ptrdiff_t dx = -3; dx <= 3 && !near; ++dx) {
            const auto yy = y + dy, xx = x + dx;
            near = yy >= 0 && yy < n && xx >= 0 && xx < n && s.mask.at(0, yy, xx) == 1.0f;
          }
        if (near) {
          ring += d;
          ++nring;
        }
      }
    }
    EXPECT_LT(in / nin, ring / nring) << s.id;
  }
}

TEST(DatasetIoTest, RoundTripThroughPnm) {
  const fs::path dir = scratch_dir("dataset_io");
  auto data = synth_dataset(3, 32, 2);
  save_dataset(dir, data);
  auto loaded = load_dataset(dir);
  ASSERT_EQ(loaded.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(loaded[i].id, data[i].id);
    EXPECT_EQ(loaded[i].mask, data[i].mask);
    for (std::size_t k = 0; k < data[i].image.data.size(); ++k) EXPECT_NEAR(loaded[i].image.data[k], data[i].image.data[k], 0.5f / 255.0f + 1e-6f);
  }
  // Saving what was loaded is lossless.
  const fs::path again = scratch_dir("dataset_io_again");
  save_dataset(again, loaded);
  EXPECT_EQ(load_dataset(again)[1].image, loaded[1].image);
}

TEST(DatasetIoTest, Errors) {
  EXPECT_THROW(load_dataset(scratch_dir("dataset_missing") / "nope"), IoError);
  const fs::path dir = scratch_dir("dataset_bad_mask");
  auto data = synth_dataset(1, 32, 2);
  data[0].mask.data[5] = 0.5f;
  save_dataset(dir, data);
  EXPECT_THROW(load_dataset(dir), DataError);
  std::ofstream(dir / "images" / "synth_0.ppm") << "P6\n4 4\n255\n";
  EXPECT_THROW(load_dataset(dir), IoError);
}

TEST(ConfigTest, DefaultsParseAndRoundTrip) {
  RunConfig defaults;
  auto cfg = parse_config("# comment only\n\n");
  EXPECT_EQ(format_config(cfg), format_config(defaults));
  auto custom = parse_config("train.lr = 0.003\nnetwork.encoder_widths = 8,16,24,32\ndegrade.gaussian_blur.literal_sigma = true # toggle\n");
  EXPECT_EQ(custom.train.lr, 0.003);
  EXPECT_EQ(custom.network.encoder_widths[2], 24u);
  EXPECT_TRUE(custom.degrade.gaussian_blur.literal_sigma);
  auto again = parse_config(format_config(custom));
  EXPECT_EQ(format_config(again), format_config(custom));
  EXPECT_EQ(config_hash(again), config_hash(custom));
  EXPECT_NE(config_hash(custom), config_hash(defaults));
}

TEST(ConfigTest, Errors) {
  EXPECT_THROW(parse_config("train.learning_rate = 1"), ConfigError);
  EXPECT_THROW(parse_config("train.lr = fast"), ConfigError);
  EXPECT_THROW(parse_config("train.lr"), ConfigError);
  EXPECT_THROW(parse_config("network.input_size = 50"), ConfigError);
  EXPECT_THROW(parse_config("degrade.jpeg.p = 2"), ConfigError);
  try {
    parse_config("\n\nbogus = 1", "desk.cfg");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("desk.cfg:3"), std::string::npos);
  }
}

TEST(ReportTest, CsvAndJsonlMirror) {
  const fs::path dir = scratch_dir("report");
  ReportTable t{{"name", "value"}, {}};
  t.add({"a,b", 1.5});
  t.add({"plain", 2});
  write_report(t, dir / "r");
  std::ifstream csv(dir / "r.csv"), jsonl(dir / "r.jsonl");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "name,value");
  std::getline(csv, line);
  EXPECT_EQ(line, "\"a,b\",1.5");
  std::getline(jsonl, line);
  EXPECT_EQ(Json::parse(line)["name"], "a,b");
  EXPECT_THROW(t.add({1}), UsageError);
}

TEST(ManifestTest, ReplayReproducesNoisyCorpus) {
  const fs::path dir = scratch_dir("manifest");
  auto clean = synth_dataset(6, 64, 3);
  DegradationSpec spec;
  spec.set_all_probabilities(1.0);
  auto [noisy, manifest] = materialize_noisy(spec, clean, 21, 2);
  write_manifest(dir / "manifest.jsonl", manifest);
  auto read = read_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(read.size(), manifest.size());
  for (std::size_t i = 0; i < read.size(); ++i) EXPECT_EQ(read[i].ops, manifest[i].ops);
  auto replayed = replay_manifest(clean, read);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(replayed[i].image, noisy[i].image);
    EXPECT_EQ(replayed[i].mask, noisy[i].mask);
    EXPECT_EQ(replayed[i].depth, noisy[i].depth);
  }
}

TEST(TrainerTest, ZeroStepsLeavesInitialisation) {
  auto data = synth_dataset(4, 64, 1);
  DepthPolyp<float> model(NetworkConfig{}, 3), reference(NetworkConfig{}, 3);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto r = train(model, data, Condition::clean, cfg);
  EXPECT_EQ(r.steps, 0u);
  auto a = model.parameters().all(), b = reference.parameters().all();
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
}

TEST(TrainerTest, ShortRunLogsFiniteValuesAndIsReproducible) {
  auto data = synth_dataset(6, 64, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 5;
  cfg.lr = 3e-3;
  DepthPolyp<float> a(NetworkConfig{}, 3), b(NetworkConfig{}, 3);
  auto ra = train(a, data, Condition::noisy, cfg);
  auto rb = train(b, data, Condition::noisy, cfg);
  EXPECT_EQ(ra.steps, 2u * 3u);  // 12 views per epoch in batches of 4
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    EXPECT_TRUE(std::isfinite(ra.log[i].loss));
    EXPECT_EQ(ra.log[i].loss, rb.log[i].loss);
  }
  EXPECT_GT(ra.log.front().lr, 0.0);
  EXPECT_LE(ra.log.front().lr, cfg.lr);
  EXPECT_NEAR(ra.log.back().lr, 0.0, 1e-12);
}

TEST(TrainerTest, NonFiniteInputAbortsWithStep) {
  auto data = synth_dataset(2, 64, 1);
  data[1].image.data[0] = std::numeric_limits<float>::quiet_NaN();
  DepthPolyp<float> model(NetworkConfig{}, 3);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  try {
    train(model, data, Condition::clean, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
}

TEST(TrainerTest, RequiresDepthTargets) {
  auto data = synth_dataset(2, 64, 1);
  data[0].depth = Image();
  DepthPolyp<float> model(NetworkConfig{}, 3);
  EXPECT_THROW(train(model, data, Condition::clean, TrainConfig{}), DataError);
}

TEST(BenchTest, PositiveRates) {
  DepthPolyp<float> model(NetworkConfig{}, 0);
  auto r = bench_fps(model, 64, 2, 10);
  EXPECT_GT(r.mean_fps, 0.0);
  EXPECT_EQ(r.seconds.size(), 10u);
  EXPECT_THROW(bench_fps(model, 64, 0, 5), UsageError);
  EXPECT_THROW(bench_fps(model, 50, 0, 10), ConfigError);
}

}  // namespace
}  // namespace depthpolyp
