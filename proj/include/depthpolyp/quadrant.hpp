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

// Four-way clean/noisy train-test evaluation and the robustness (delta_r)
// and clean-penalty (delta_h) gaps.

#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "depthpolyp/checkpoint.hpp"
#include "depthpolyp/dataset.hpp"
#include "depthpolyp/metrics.hpp"

namespace depthpolyp {

enum class Condition { clean, noisy };

inline const char* to_string(Condition c) { return c == Condition::clean ? "clean" : "noisy"; }

inline Condition parse_condition(const std::string& s) {
  if (s == "clean") return Condition::clean;
  if (s == "noisy") return Condition::noisy;
  throw UsageError("condition must be 'clean' or 'noisy', got '" + s + "'");
}

/// Mean Dice of each (train condition -> test condition) pairing.
struct QuadrantDice {
  double clean_clean = 0.0;
  double clean_noisy = 0.0;
  double noisy_clean = 0.0;
  double noisy_noisy = 0.0;

  /// (noisy -> noisy) - (clean -> noisy): what noisy training recovers on
  /// degraded data.
  double delta_r() const { return noisy_noisy - clean_noisy; }
  /// (noisy -> clean) - (clean -> clean): what noisy training costs on clean
  /// data.
  double delta_h() const { return noisy_clean - clean_clean; }
};

struct QuadrantReport {
  /// Indexed [train][test] with clean = 0, noisy = 1.
  std::array<std::array<MetricReport, 2>, 2> reports;

  const MetricReport& at(Condition train, Condition test) const {
    return reports[static_cast<int>(train)][static_cast<int>(test)];
  }
  QuadrantDice dice() const {
    return {at(Condition::clean, Condition::clean).mean.dice, at(Condition::clean, Condition::noisy).mean.dice,
            at(Condition::noisy, Condition::clean).mean.dice, at(Condition::noisy, Condition::noisy).mean.dice};
  }
  double delta_r() const { return dice().delta_r(); }
  double delta_h() const { return dice().delta_h(); }
};

/// Evaluates both models on both test corpora with one threshold.
template <std::floating_point T>
QuadrantReport quadrant_eval(DepthPolyp<T>& clean_model, DepthPolyp<T>& noisy_model,
                             const std::vector<Sample>& clean_set, const std::vector<Sample>& noisy_set,
                             double threshold = kDefaultThreshold, std::size_t threads = 1) {
  QuadrantReport r;
  r.reports[0][0] = evaluate(clean_model, clean_set, threshold, 16, threads);
  r.reports[0][1] = evaluate(clean_model, noisy_set, threshold, 16, threads);
  r.reports[1][0] = evaluate(noisy_model, clean_set, threshold, 16, threads);
  r.reports[1][1] = evaluate(noisy_model, noisy_set, threshold, 16, threads);
  return r;
}

struct QuadrantPaths {
  std::filesystem::path clean_checkpoint;
  std::filesystem::path noisy_checkpoint;
  std::filesystem::path clean_set;
  std::filesystem::path noisy_set;
};

/// Loads the two checkpoints and two corpora, then evaluates. A missing
/// input raises IoError naming the quadrants that need it.
inline QuadrantReport quadrant_eval(const QuadrantPaths& paths, double threshold = kDefaultThreshold,
                                    std::size_t threads = 1) {
  auto require = [](const std::filesystem::path& p, const std::string& what) {
    if (!std::filesystem::exists(p)) throw IoError(what + " not found: " + p.string());
  };
  require(paths.clean_checkpoint, "clean-trained checkpoint (quadrants clean->clean, clean->noisy)");
  require(paths.noisy_checkpoint, "noisy-trained checkpoint (quadrants noisy->clean, noisy->noisy)");
  require(paths.clean_set / "index.txt", "clean test corpus (quadrants clean->clean, noisy->clean)");
  require(paths.noisy_set / "index.txt", "noisy test corpus (quadrants clean->noisy, noisy->noisy)");
  auto clean_model = load_model(paths.clean_checkpoint);
  auto noisy_model = load_model(paths.noisy_checkpoint);
  const auto clean_set = load_dataset(paths.clean_set);
  const auto noisy_set = load_dataset(paths.noisy_set);
  return quadrant_eval(clean_model, noisy_model, clean_set, noisy_set, threshold, threads);
}

}  // namespace depthpolyp
