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

#include <filesystem>
#include <random>
#include <set>
#include <vector>

#include "depthpolyp/accounting.hpp"
#include "depthpolyp/checkpoint.hpp"
#include "depthpolyp/grad_check.hpp"
#include "depthpolyp/network.hpp"

namespace depthpolyp {
namespace {

template <class T = float>
Tensor<T> random_tensor(Shape s, unsigned seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(dist(gen));
  return Tensor<T>(s, std::move(v));
}

template <class T = float>
Tensor<T> random_mask(Shape s, unsigned seed) {
  std::mt19937 gen(seed);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(gen() % 2);
  return Tensor<T>(s, std::move(v));
}

NetworkConfig compact_config() {
  NetworkConfig c;
  c.input_height = c.input_width = 32;
  c.encoder_widths = {4, 8, 8, 8};
  c.unified_dim = 8;
  c.stage2_width = 8;
  c.fused_dim = 8;  // stage-III width 16 -> exercises the fusion projection
  return c;
}

TEST(NetworkConfigTest, Validation) {
  NetworkConfig c;
  EXPECT_NO_THROW(c.validate());
  c.input_height = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c = NetworkConfig{};
  c.unified_dim = 66;  // divisible by 2 but not by 4
  EXPECT_THROW(c.validate(), ConfigError);
  c = NetworkConfig{};
  c.stage2_width = 34;  // stage-III width 68 is divisible by 4, stage-II C_p = 17 is fine
  EXPECT_NO_THROW(c.validate());
  c.stage2_width = 33;  // stage-III width 66 not divisible by 4
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EncoderTest, StrideArithmetic) {
  NetworkConfig c;
  c.encoder_widths = {8, 16, 24, 32};
  DepthPolyp<float> model(c, 1);
  auto feats = model.encode(random_tensor(Shape{2, 3, 64, 64}, 1), Mode::train);
  EXPECT_EQ(feats[0].shape(), (Shape{2, 8, 16, 16}));
  EXPECT_EQ(feats[1].shape(), (Shape{2, 16, 8, 8}));
  EXPECT_EQ(feats[2].shape(), (Shape{2, 24, 4, 4}));
  EXPECT_EQ(feats[3].shape(), (Shape{2, 32, 2, 2}));
  EXPECT_THROW(model.encode(random_tensor(Shape{1, 3, 48, 64}, 1), Mode::train), ConfigError);
}

TEST(EncoderTest, ConstantImageStaysFinite) {
  DepthPolyp<float> model(NetworkConfig{}, 2);
  Tensor<float> img(Shape{1, 3, 64, 64}, 0.5f);
  auto out = model.forward(img, Mode::train);
  EXPECT_TRUE(out.seg_logits.all_finite());
  EXPECT_TRUE(out.depth.all_finite());
}

TEST(UnifyTest, ShapesAndConstants) {
  DepthPolyp<float> model(NetworkConfig{}, 3);
  auto feats = model.encode(random_tensor(Shape{1, 3, 64, 64}, 4), Mode::eval);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor<float> u = model.unify(i, feats[i], 16, 16);
    EXPECT_EQ(u.shape(), (Shape{1, 64, 16, 16}));
  }
  Tensor<float> constant(Shape{1, 128, 2, 2}, 0.25f);
  Tensor<float> u = model.unify(3, constant, 16, 16);
  for (std::size_t c = 0; c < 64; ++c) {
    const float v0 = u.at(0, c, 0, 0);
    for (std::size_t p = 0; p < 256; ++p) EXPECT_EQ(u.at(0, c, p / 16, p % 16), v0);
  }
}

TEST(DecoderTest, ChannelBookkeeping) {
  NetworkConfig c;
  EXPECT_EQ(c.primary_stream_width(), 128u);
  EXPECT_EQ(c.auxiliary_stream_width(), 128u);
  EXPECT_EQ(c.stage2_primary_gfm().primary_channels(), 16u);
  EXPECT_EQ(c.stage2_primary_gfm().auxiliary_channels(), 16u);
  EXPECT_EQ(c.stage3_width(), 64u);
  EXPECT_FALSE(c.has_fusion_projection());
  DepthPolyp<float> model(c, 5);
  DepthPolyp<float>::Features unified;
  for (std::size_t i = 0; i < 4; ++i) unified[i] = random_tensor(Shape{2, 64, 16, 16}, 10 + i);
  EXPECT_EQ(model.decode(unified, Mode::train).shape(), (Shape{2, 64, 16, 16}));
}

TEST(HeadsTest, RangesAndZeroCase) {
  DepthPolyp<float> model(NetworkConfig{}, 6);
  auto out = model.forward(random_tensor(Shape{1, 3, 64, 64}, 7), Mode::train);
  EXPECT_EQ(out.seg_logits.shape(), (Shape{1, 1, 64, 64}));
  EXPECT_EQ(out.depth.shape(), (Shape{1, 1, 64, 64}));
  for (float d : out.depth.data()) {
    EXPECT_GE(d, 0.0f);
    EXPECT_LE(d, 1.0f);
  }
  std::fill(model.seg_head().mutable_data().begin(), model.seg_head().mutable_data().end(), 0.0f);
  std::fill(model.depth_head().mutable_data().begin(), model.depth_head().mutable_data().end(), 0.0f);
  auto zero = model.heads(Tensor<float>(Shape{1, 64, 16, 16}), 64, 64);
  for (float v : zero.seg_logits.data()) EXPECT_EQ(v, 0.0f);
  for (float v : zero.depth.data()) EXPECT_EQ(v, 0.5f);
}

TEST(NetworkTest, ShapeContractForSizesDivisibleBy32) {
  DepthPolyp<float> model(compact_config(), 8);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{32, 32}, {64, 32}, {96, 64}}) {
    auto out = model.forward(random_tensor(Shape{2, 3, h, w}, 9), Mode::eval);
    EXPECT_EQ(out.seg_logits.shape(), (Shape{2, 1, h, w}));
    EXPECT_EQ(out.depth.shape(), (Shape{2, 1, h, w}));
  }
}

TEST(NetworkTest, ForwardIsDeterministic) {
  auto img = random_tensor(Shape{2, 3, 64, 64}, 10);
  DepthPolyp<float> a(NetworkConfig{}, 42), b(NetworkConfig{}, 42);
  auto oa = a.forward(img, Mode::train), ob = b.forward(img, Mode::train);
  EXPECT_TRUE(std::equal(oa.seg_logits.data().begin(), oa.seg_logits.data().end(), ob.seg_logits.data().begin()));
  EXPECT_TRUE(std::equal(oa.depth.data().begin(), oa.depth.data().end(), ob.depth.data().begin()));
}

TEST(NetworkTest, ParameterNamesUnique) {
  DepthPolyp<float> model(NetworkConfig{}, 0);
  std::set<std::string> names;
  for (const auto& nt : model.parameters().all()) EXPECT_TRUE(names.insert(nt.name).second) << nt.name;
}

TEST(AccountingTest, ParamsMatchEnumeration) {
  for (const NetworkConfig& cfg : {NetworkConfig{}, compact_config()}) {
    DepthPolyp<float> model(cfg, 0);
    const CostTable table = count_costs(cfg, cfg.input_height, cfg.input_width);
    EXPECT_EQ(table.total_params(), model.parameters().parameter_count());
    std::uint64_t rows = 0;
    for (const auto& r : table.rows) rows += r.params;
    EXPECT_EQ(rows, table.total_params());
  }
}

TEST(AccountingTest, EncoderClosedForm) {
  NetworkConfig c;
  c.encoder_widths = {8, 16, 24, 32};
  const std::uint64_t expected = (3 * 8 * 9 + 16) + (8 * 8 * 9 + 16) + (8 * 16 * 9 + 32) +
                                 (16 * 24 * 9 + 48) + (24 * 32 * 9 + 64);
  EXPECT_EQ(count_costs(c, 64, 64).group_params("encoder"), expected);
  DepthPolyp<float> model(c, 0);
  std::uint64_t enumerated = 0;
  for (const auto& p : model.parameters().parameters)
    if (p.name.rfind("encoder.", 0) == 0) enumerated += p.tensor.numel();
  EXPECT_EQ(enumerated, expected);
}

TEST(AccountingTest, MacsMatchInstrumentedKernels) {
  for (const NetworkConfig& cfg : {NetworkConfig{}, compact_config()}) {
    DepthPolyp<float> model(cfg, 0);
    for (std::size_t size : {32u, 64u}) {
      MacCounter::reset();
      model.forward(random_tensor(Shape{1, 3, size, size}, 11), Mode::eval);
      EXPECT_EQ(MacCounter::value(), count_macs(cfg, size, size)) << "size " << size;
    }
  }
}

TEST(AccountingTest, HeadRowAndScaling) {
  const CostTable t = count_costs(NetworkConfig{}, 64, 64);
  for (const auto& r : t.rows)
    if (r.name == "heads.seg") {
      EXPECT_EQ(r.params, 64u);
    }
  const CostTable big = count_costs(NetworkConfig{}, 128, 128);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].name == "decoder.stage3.dgg" || t.rows[i].name == "loss") continue;
    EXPECT_EQ(big.rows[i].macs, 4 * t.rows[i].macs) << t.rows[i].name;
  }
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  DepthPolyp<float> model(NetworkConfig{}, 12);
  // Move BN stats away from their initial values.
  model.forward(random_tensor(Shape{2, 3, 64, 64}, 13), Mode::train);
  const auto path = std::filesystem::temp_directory_path() / "depthpolyp_ckpt_test.bin";
  save_model(model, path);
  DepthPolyp<float> loaded = load_model(path);
  EXPECT_EQ(loaded.config(), model.config());
  auto a = model.parameters().all(), b = loaded.parameters().all();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }
  auto img = random_tensor(Shape{1, 3, 64, 64}, 14);
  auto oa = model.forward(img, Mode::eval), ob = loaded.forward(img, Mode::eval);
  EXPECT_TRUE(std::equal(oa.seg_logits.data().begin(), oa.seg_logits.data().end(), ob.seg_logits.data().begin()));
  std::filesystem::remove(path);
}

TEST(CheckpointTest, CorruptionDetected) {
  DepthPolyp<float> model(compact_config(), 0);
  auto bytes = encode_checkpoint(model_records(model));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DPLY");
  auto flipped = bytes;
  flipped[40] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(flipped), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), IoError);
  auto records = decode_checkpoint(bytes);
  EXPECT_EQ(records.front().name, "meta.network_config");
}

// Whole network + joint loss against central differences in f64, for the
// input image and every parameter scalar of a compact configuration. A 1e-3
// step straddles ReLU kinks behind batch-normalised activations, so this uses
// a small step and a batch of two (a single sample leaves the 1x1 deepest
// stage with zero batch variance, parking it exactly on a kink). The 1e-6
// floor absorbs FD roundoff (about 1e-10 absolute) on near-zero gradients.
TEST(NetworkGradientTest, CompactEndToEnd) {
  DepthPolyp<float> model32(compact_config(), 15);
  DepthPolyp<double> model = model32.cast<double>();
  auto img = random_tensor<double>(Shape{2, 3, 32, 32}, 16);
  auto mask = random_mask<double>(Shape{2, 1, 32, 32}, 17);
  auto depth = random_tensor<double>(Shape{2, 1, 32, 32}, 18);
  model.loss_state().s_seg.mutable_data()[0] = 0.3;
  model.loss_state().s_depth.mutable_data()[0] = -0.2;
  auto loss_of = [&](const Tensor<double>& x) {
    auto out = model.forward(x, Mode::train);
    return joint_loss(model.loss_state(), dice_loss(sigmoid(out.seg_logits), mask), smooth_l1(out.depth, depth));
  };
  constexpr double h = 1e-5, floor = 1e-6;
  EXPECT_LT(grad_check(loss_of, img, h, floor), 1e-3);
  std::vector<Tensor<double>> params;
  for (auto& p : model.parameters().parameters) params.push_back(p.tensor);
  EXPECT_LT(grad_check_params([&] { return loss_of(img); }, params, h, 0, 0, floor), 1e-3);
}

// Default widths, a few sampled entries per parameter tensor.
TEST(NetworkGradientTest, DefaultConfigSampled) {
  DepthPolyp<double> model = DepthPolyp<float>(NetworkConfig{}, 19).cast<double>();
  auto img = random_tensor<double>(Shape{2, 3, 32, 32}, 20);
  auto mask = random_mask<double>(Shape{2, 1, 32, 32}, 21);
  auto depth = random_tensor<double>(Shape{2, 1, 32, 32}, 22);
  std::vector<Tensor<double>> params;
  for (auto& p : model.parameters().parameters) params.push_back(p.tensor);
  auto loss = [&] {
    auto out = model.forward(img, Mode::train);
    return joint_loss(model.loss_state(), dice_loss(sigmoid(out.seg_logits), mask), smooth_l1(out.depth, depth));
  };
  EXPECT_LT(grad_check_params(loss, params, 1e-5, 3, 7, 1e-6), 1e-3);
}

}  // namespace
}  // namespace depthpolyp
