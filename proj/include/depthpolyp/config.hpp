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

// Flat `key = value` run configuration. Every key has a default; unknown
// keys and malformed values are errors.

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "depthpolyp/degrade.hpp"
#include "depthpolyp/metrics.hpp"
#include "depthpolyp/network.hpp"
#include "depthpolyp/trainer.hpp"

namespace depthpolyp {

struct DataConfig {
  std::size_t image_size = 64;
  std::size_t train_count = 256;
  std::size_t test_count = 64;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 2;
  /// Seed for materialising noisy test corpora.
  std::uint64_t degrade_seed = 3;
};

struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  DataConfig data;
  DegradationSpec degrade;
  double threshold = kDefaultThreshold;
  std::size_t threads = 1;

  void validate() const {
    network.validate();
    train.validate();
    degrade.validate();
    if (data.image_size % 32 != 0 || data.image_size == 0) throw ConfigError("data.image_size must be a positive multiple of 32");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("eval.threshold must lie in (0, 1)");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class N>
N parse_number(const std::string& key, const std::string& text) {
  N value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": cannot parse '" + text + "'");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

template <class N>
std::vector<N> parse_list(const std::string& key, const std::string& text) {
  std::vector<N> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<N>(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

template <class N>
std::string join(const std::vector<N>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class N, class Access>
Field number_field(const std::string& key, Access access) {
  return {[key, access](RunConfig& c, const std::string& v) { access(c) = parse_number<N>(key, v); },
          [access](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<N>) return format_double(access(const_cast<RunConfig&>(c)));
            else return std::to_string(access(const_cast<RunConfig&>(c)));
          }};
}

inline const std::map<std::string, Field>& config_fields() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    using Z = std::size_t;
    using U = std::uint64_t;
    // network
    f["network.input_size"] = {[](RunConfig& c, const std::string& v) {
                                 c.network.input_height = c.network.input_width = parse_number<Z>("network.input_size", v);
                               },
                               [](const RunConfig& c) { return std::to_string(c.network.input_height); }};
    f["network.encoder_widths"] = {
        [](RunConfig& c, const std::string& v) {
          auto w = parse_list<Z>("network.encoder_widths", v);
          if (w.size() != 4) throw ConfigError("network.encoder_widths: expected 4 values");
          std::copy(w.begin(), w.end(), c.network.encoder_widths.begin());
        },
        [](const RunConfig& c) {
          return join(std::vector<Z>(c.network.encoder_widths.begin(), c.network.encoder_widths.end()));
        }};
    f["network.encoder_depth"] = number_field<Z>("network.encoder_depth", [](RunConfig& c) -> auto& { return c.network.encoder_depth; });
    f["network.encoder_kernel"] = number_field<Z>("network.encoder_kernel", [](RunConfig& c) -> auto& { return c.network.encoder_kernel; });
    f["network.unified_dim"] = number_field<Z>("network.unified_dim", [](RunConfig& c) -> auto& { return c.network.unified_dim; });
    f["network.split_ratio"] = number_field<Z>("network.split_ratio", [](RunConfig& c) -> auto& { return c.network.split_ratio; });
    f["network.groups"] = number_field<Z>("network.groups", [](RunConfig& c) -> auto& { return c.network.groups; });
    f["network.stage2_width"] = number_field<Z>("network.stage2_width", [](RunConfig& c) -> auto& { return c.network.stage2_width; });
    f["network.fused_dim"] = number_field<Z>("network.fused_dim", [](RunConfig& c) -> auto& { return c.network.fused_dim; });
    f["network.dw_kernel"] = number_field<Z>("network.dw_kernel", [](RunConfig& c) -> auto& { return c.network.dw_kernel; });
    // train
    f["train.epochs"] = number_field<Z>("train.epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
    f["train.batch_size"] = number_field<Z>("train.batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    f["train.max_steps"] = number_field<Z>("train.max_steps", [](RunConfig& c) -> auto& { return c.train.max_steps; });
    f["train.lr"] = number_field<double>("train.lr", [](RunConfig& c) -> auto& { return c.train.lr; });
    f["train.weight_decay"] = number_field<double>("train.weight_decay", [](RunConfig& c) -> auto& { return c.train.weight_decay; });
    f["train.warmup_fraction"] = number_field<double>("train.warmup_fraction", [](RunConfig& c) -> auto& { return c.train.warmup_fraction; });
    f["train.depth_weight"] = number_field<double>("train.depth_weight", [](RunConfig& c) -> auto& { return c.train.depth_weight; });
    f["train.seed"] = number_field<U>("train.seed", [](RunConfig& c) -> auto& { return c.train.seed; });
    // data
    f["data.image_size"] = number_field<Z>("data.image_size", [](RunConfig& c) -> auto& { return c.data.image_size; });
    f["data.train_count"] = number_field<Z>("data.train_count", [](RunConfig& c) -> auto& { return c.data.train_count; });
    f["data.test_count"] = number_field<Z>("data.test_count", [](RunConfig& c) -> auto& { return c.data.test_count; });
    f["data.train_seed"] = number_field<U>("data.train_seed", [](RunConfig& c) -> auto& { return c.data.train_seed; });
    f["data.test_seed"] = number_field<U>("data.test_seed", [](RunConfig& c) -> auto& { return c.data.test_seed; });
    f["data.degrade_seed"] = number_field<U>("data.degrade_seed", [](RunConfig& c) -> auto& { return c.data.degrade_seed; });
    // degrade
    f["degrade.motion_blur.p"] = number_field<double>("degrade.motion_blur.p", [](RunConfig& c) -> auto& { return c.degrade.motion_blur.p; });
    f["degrade.motion_blur.min_kernel"] = number_field<Z>("degrade.motion_blur.min_kernel", [](RunConfig& c) -> auto& { return c.degrade.motion_blur.min_kernel; });
    f["degrade.motion_blur.max_kernel"] = number_field<Z>("degrade.motion_blur.max_kernel", [](RunConfig& c) -> auto& { return c.degrade.motion_blur.max_kernel; });
    f["degrade.gaussian_blur.p"] = number_field<double>("degrade.gaussian_blur.p", [](RunConfig& c) -> auto& { return c.degrade.gaussian_blur.p; });
    f["degrade.gaussian_blur.sizes"] = {
        [](RunConfig& c, const std::string& v) { c.degrade.gaussian_blur.sizes = parse_list<Z>("degrade.gaussian_blur.sizes", v); },
        [](const RunConfig& c) { return join(c.degrade.gaussian_blur.sizes); }};
    f["degrade.gaussian_blur.literal_sigma"] = {
        [](RunConfig& c, const std::string& v) { c.degrade.gaussian_blur.literal_sigma = parse_bool("degrade.gaussian_blur.literal_sigma", v); },
        [](const RunConfig& c) { return std::string(c.degrade.gaussian_blur.literal_sigma ? "true" : "false"); }};
    f["degrade.brightness.p"] = number_field<double>("degrade.brightness.p", [](RunConfig& c) -> auto& { return c.degrade.brightness.p; });
    f["degrade.brightness.min"] = number_field<double>("degrade.brightness.min", [](RunConfig& c) -> auto& { return c.degrade.brightness.lo; });
    f["degrade.brightness.max"] = number_field<double>("degrade.brightness.max", [](RunConfig& c) -> auto& { return c.degrade.brightness.hi; });
    f["degrade.contrast.p"] = number_field<double>("degrade.contrast.p", [](RunConfig& c) -> auto& { return c.degrade.contrast.p; });
    f["degrade.contrast.min"] = number_field<double>("degrade.contrast.min", [](RunConfig& c) -> auto& { return c.degrade.contrast.lo; });
    f["degrade.contrast.max"] = number_field<double>("degrade.contrast.max", [](RunConfig& c) -> auto& { return c.degrade.contrast.hi; });
    f["degrade.jpeg.p"] = number_field<double>("degrade.jpeg.p", [](RunConfig& c) -> auto& { return c.degrade.jpeg.p; });
    f["degrade.jpeg.min_quality"] = number_field<int>("degrade.jpeg.min_quality", [](RunConfig& c) -> auto& { return c.degrade.jpeg.min_quality; });
    f["degrade.jpeg.max_quality"] = number_field<int>("degrade.jpeg.max_quality", [](RunConfig& c) -> auto& { return c.degrade.jpeg.max_quality; });
    f["degrade.light_spots.p"] = number_field<double>("degrade.light_spots.p", [](RunConfig& c) -> auto& { return c.degrade.light_spots.p; });
    f["degrade.light_spots.min_radius"] = number_field<double>("degrade.light_spots.min_radius", [](RunConfig& c) -> auto& { return c.degrade.light_spots.min_radius; });
    f["degrade.light_spots.max_radius"] = number_field<double>("degrade.light_spots.max_radius", [](RunConfig& c) -> auto& { return c.degrade.light_spots.max_radius; });
    f["degrade.light_spots.intensity"] = number_field<double>("degrade.light_spots.intensity", [](RunConfig& c) -> auto& { return c.degrade.light_spots.intensity; });
    f["degrade.light_spots.min_spots"] = number_field<int>("degrade.light_spots.min_spots", [](RunConfig& c) -> auto& { return c.degrade.light_spots.min_spots; });
    f["degrade.light_spots.max_spots"] = number_field<int>("degrade.light_spots.max_spots", [](RunConfig& c) -> auto& { return c.degrade.light_spots.max_spots; });
    f["degrade.fog.p"] = number_field<double>("degrade.fog.p", [](RunConfig& c) -> auto& { return c.degrade.fog.p; });
    f["degrade.fog.min"] = number_field<double>("degrade.fog.min", [](RunConfig& c) -> auto& { return c.degrade.fog.lo; });
    f["degrade.fog.max"] = number_field<double>("degrade.fog.max", [](RunConfig& c) -> auto& { return c.degrade.fog.hi; });
    f["degrade.optical_distortion.p"] = number_field<double>("degrade.optical_distortion.p", [](RunConfig& c) -> auto& { return c.degrade.optical_distortion.p; });
    f["degrade.optical_distortion.distort"] = number_field<double>("degrade.optical_distortion.distort", [](RunConfig& c) -> auto& { return c.degrade.optical_distortion.distort; });
    f["degrade.optical_distortion.shift"] = number_field<double>("degrade.optical_distortion.shift", [](RunConfig& c) -> auto& { return c.degrade.optical_distortion.shift; });
    // eval / runtime
    f["eval.threshold"] = number_field<double>("eval.threshold", [](RunConfig& c) -> auto& { return c.threshold; });
    f["runtime.threads"] = number_field<Z>("runtime.threads", [](RunConfig& c) -> auto& { return c.threads; });
    return f;
  }();
  return fields;
}

}  // namespace detail

/// Applies one `key = value` assignment.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

/// Parses `key = value` lines; `#` starts a comment. Starts from defaults.
inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    try {
      set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// Every key with its current value, sorted by key; parse_config of this
/// text reproduces `cfg`.
inline std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

/// FNV-1a over the canonical text form.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : format_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace depthpolyp
