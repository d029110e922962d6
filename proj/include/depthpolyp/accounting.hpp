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

// Closed-form parameter and multiply-accumulate accounting.
//
// Conventions: a convolution costs C_out * (C_in / groups) * K^2 MACs per
// output pixel (padding taps included); a linear layer costs fan_in *
// fan_out; bilinear resize costs 4 MACs per output element; batch-norm,
// activations, pooling, shuffles and concatenation are free.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "depthpolyp/network.hpp"

namespace depthpolyp {

struct CostRow {
  std::string name;
  std::string group;  // encoder | decoder | heads | loss
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostTable {
  std::vector<CostRow> rows;

  std::uint64_t total_params() const {
    std::uint64_t n = 0;
    for (const auto& r : rows) n += r.params;
    return n;
  }
  std::uint64_t total_macs() const {
    std::uint64_t n = 0;
    for (const auto& r : rows) n += r.macs;
    return n;
  }
  double gmacs() const { return static_cast<double>(total_macs()) * 1e-9; }
  std::uint64_t group_params(const std::string& g) const {
    std::uint64_t n = 0;
    for (const auto& r : rows) n += r.group == g ? r.params : 0;
    return n;
  }
};

namespace cost {

inline std::uint64_t conv_params(std::uint64_t cin, std::uint64_t cout, std::uint64_t k,
                                 std::uint64_t groups = 1) {
  return cout * (cin / groups) * k * k;
}
inline std::uint64_t conv_macs(std::uint64_t cin, std::uint64_t cout, std::uint64_t k,
                               std::uint64_t out_h, std::uint64_t out_w, std::uint64_t groups = 1) {
  return conv_params(cin, cout, k, groups) * out_h * out_w;
}
inline std::uint64_t strided_extent(std::uint64_t in, std::uint64_t k, std::uint64_t stride) {
  return (in + 2 * (k / 2) - k) / stride + 1;
}
inline std::uint64_t batchnorm_params(std::uint64_t c) { return 2 * c; }
inline std::uint64_t upsample_macs(std::uint64_t c, std::uint64_t out_h, std::uint64_t out_w) {
  return 4 * c * out_h * out_w;
}

/// Learnable scalars of a GFM: C_in*C_p + C_a*K^2 + BN affine 2*(C_p + C_a).
inline std::uint64_t gfm_params(const GfmConfig& g) {
  const std::uint64_t cp = g.primary_channels(), ca = g.auxiliary_channels();
  return g.in_channels * cp + ca * g.dw_kernel * g.dw_kernel + batchnorm_params(cp) + batchnorm_params(ca);
}
inline std::uint64_t gfm_macs(const GfmConfig& g, std::uint64_t h, std::uint64_t w) {
  const std::uint64_t cp = g.primary_channels(), ca = g.auxiliary_channels();
  return (g.in_channels * cp + ca * g.dw_kernel * g.dw_kernel) * h * w;
}

/// Dense K x K conv + BN with the same C_in -> C_out shape as a GFM.
inline std::uint64_t dense_equivalent_params(const GfmConfig& g) {
  return conv_params(g.in_channels, g.out_channels, g.dw_kernel) + batchnorm_params(g.out_channels);
}

inline std::uint64_t isf_params(const IsfConfig& c) {
  return c.channels * c.dw_kernel * c.dw_kernel + c.groups;
}
inline std::uint64_t isf_macs(const IsfConfig& c, std::uint64_t h, std::uint64_t w) {
  return c.channels * c.dw_kernel * c.dw_kernel * h * w;
}

inline std::uint64_t dgg_params(const DggConfig& c) { return c.groups * c.groups + c.groups; }
inline std::uint64_t dgg_macs(const DggConfig& c) { return c.groups * c.groups; }

}  // namespace cost

/// Per-layer table for one forward pass at batch size 1, derived from the
/// configuration alone.
inline CostTable count_costs(const NetworkConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  cfg.validate_input(height, width);
  CostTable t;
  auto conv_row = [&](std::string name, std::uint64_t cin, std::uint64_t cout, std::uint64_t k,
                      std::uint64_t ho, std::uint64_t wo) {
    t.rows.push_back({std::move(name), "encoder",
                      cost::conv_params(cin, cout, k) + cost::batchnorm_params(cout),
                      cost::conv_macs(cin, cout, k, ho, wo)});
  };

  const auto& widths = cfg.encoder_widths;
  const std::uint64_t k = cfg.encoder_kernel;
  std::uint64_t h = cost::strided_extent(height, k, 2), w = cost::strided_extent(width, k, 2);
  conv_row("encoder.stem", 3, widths[0], k, h, w);
  std::array<std::uint64_t, 4> fh{}, fw{};
  for (std::size_t s = 0; s < 4; ++s) {
    const std::uint64_t in = s == 0 ? widths[0] : widths[s - 1];
    h = cost::strided_extent(h, k, 2);
    w = cost::strided_extent(w, k, 2);
    for (std::size_t d = 0; d < cfg.encoder_depth; ++d) {
      conv_row("encoder.stage" + std::to_string(s + 1) + "." + std::to_string(d), d == 0 ? in : widths[s],
               widths[s], k, h, w);
    }
    fh[s] = h;
    fw[s] = w;
  }

  const std::uint64_t qh = height / 4, qw = width / 4;
  for (std::size_t s = 0; s < 4; ++s) {
    t.rows.push_back({"unify" + std::to_string(s + 1), "decoder",
                      cost::conv_params(widths[s], cfg.unified_dim, 1),
                      cost::conv_macs(widths[s], cfg.unified_dim, 1, fh[s], fw[s]) +
                          cost::upsample_macs(cfg.unified_dim, qh, qw)});
  }
  for (std::size_t s = 0; s < 4; ++s) {
    t.rows.push_back({"decoder.stage1.gfm" + std::to_string(s + 1), "decoder",
                      cost::gfm_params(cfg.stage1_gfm()), cost::gfm_macs(cfg.stage1_gfm(), qh, qw)});
  }
  const IsfConfig isf_p{cfg.primary_stream_width(), cfg.groups, 3};
  const IsfConfig isf_a{cfg.auxiliary_stream_width(), cfg.groups, 3};
  t.rows.push_back({"decoder.stage2.isf_primary", "decoder", cost::isf_params(isf_p), cost::isf_macs(isf_p, qh, qw)});
  t.rows.push_back({"decoder.stage2.gfm_primary", "decoder", cost::gfm_params(cfg.stage2_primary_gfm()),
                    cost::gfm_macs(cfg.stage2_primary_gfm(), qh, qw)});
  t.rows.push_back({"decoder.stage2.isf_auxiliary", "decoder", cost::isf_params(isf_a), cost::isf_macs(isf_a, qh, qw)});
  t.rows.push_back({"decoder.stage2.gfm_auxiliary", "decoder", cost::gfm_params(cfg.stage2_auxiliary_gfm()),
                    cost::gfm_macs(cfg.stage2_auxiliary_gfm(), qh, qw)});
  const DggConfig dgg{cfg.stage3_width(), cfg.groups};
  t.rows.push_back({"decoder.stage3.dgg", "decoder", cost::dgg_params(dgg), cost::dgg_macs(dgg)});
  if (cfg.has_fusion_projection()) {
    t.rows.push_back({"decoder.fusion", "decoder",
                      cost::conv_params(cfg.stage3_width(), cfg.fused_dim, 1) + cost::batchnorm_params(cfg.fused_dim),
                      cost::conv_macs(cfg.stage3_width(), cfg.fused_dim, 1, qh, qw)});
  }
  for (const char* head : {"heads.seg", "heads.depth"}) {
    t.rows.push_back({head, "heads", cost::conv_params(cfg.fused_dim, 1, 1),
                      cost::conv_macs(cfg.fused_dim, 1, 1, qh, qw) + cost::upsample_macs(1, height, width)});
  }
  t.rows.push_back({"loss", "loss", 2, 0});
  return t;
}

inline std::uint64_t count_params(const NetworkConfig& cfg) {
  return count_costs(cfg, cfg.input_height, cfg.input_width).total_params();
}

inline std::uint64_t count_macs(const NetworkConfig& cfg, std::size_t height, std::size_t width) {
  return count_costs(cfg, height, width).total_macs();
}

}  // namespace depthpolyp
