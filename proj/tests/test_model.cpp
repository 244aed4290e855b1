// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "quept/artifact.hpp"
#include "quept/errors.hpp"
#include "quept/model.hpp"
#include "quept/recon.hpp"

using namespace quept;

namespace {
ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.blocks = 2;
  cfg.dim = 16;
  cfg.heads = 4;
  cfg.tokens = 8;
  cfg.mlp_ratio = 2;
  cfg.seed = 0;
  return cfg;
}
}  // namespace

TEST_CASE("zero weights reduce the block to a residual passthrough") {
  ModelConfig cfg = small_cfg();
  ToyModel m = ToyModel::random(cfg);
  BlockWeights& bw = m.blocks[0];
  for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
    bw.weight(k) = Tensor::zeros(bw.weight(k).shape());
    bw.bias(k) = Tensor::zeros(bw.bias(k).shape());
  }
  Rng rng(1);
  const Tensor x = Tensor::normal({2 * cfg.tokens, cfg.dim}, rng);
  const Tensor y = forward_fp(bw, x, 2, cfg.tokens, cfg.heads);
  CHECK(max_abs_diff(x, y) == 0.0f);
}

TEST_CASE("permuting batch sequences permutes outputs identically") {
  ModelConfig cfg = small_cfg();
  const ToyModel m = ToyModel::random(cfg);
  Rng rng(2);
  const Tensor a = Tensor::normal({cfg.tokens, cfg.dim}, rng);
  const Tensor b = Tensor::normal({cfg.tokens, cfg.dim}, rng);

  auto stack = [&](const Tensor& first, const Tensor& second) {
    Tensor x({2 * cfg.tokens, cfg.dim});
    for (std::size_t r = 0; r < cfg.tokens; ++r)
      for (std::size_t c = 0; c < cfg.dim; ++c) {
        x.at(r, c) = first.at(r, c);
        x.at(cfg.tokens + r, c) = second.at(r, c);
      }
    return x;
  };
  const Tensor y_ab = forward_fp(m.blocks[0], stack(a, b), 2, cfg.tokens, cfg.heads);
  const Tensor y_ba = forward_fp(m.blocks[0], stack(b, a), 2, cfg.tokens, cfg.heads);
  for (std::size_t r = 0; r < cfg.tokens; ++r)
    for (std::size_t c = 0; c < cfg.dim; ++c) {
      CHECK(y_ab.at(r, c) == y_ba.at(cfg.tokens + r, c));
      CHECK(y_ab.at(cfg.tokens + r, c) == y_ba.at(r, c));
    }
}

TEST_CASE("seed-0 block forward reproduces the committed fixture checksum") {
  ModelConfig cfg = small_cfg();
  const ToyModel m = ToyModel::random(cfg);
  const CalibSet cs = gen_calib(0, 4, cfg.tokens, cfg.dim);
  const Tensor y = forward_fp(m.blocks[0], cs.flat, cs.n, cfg.tokens, cfg.heads);
  const std::uint32_t checksum = crc32(y.data(), y.numel() * sizeof(float));
  // regression fixture from this implementation's first seeded run,
  // cross-checked by an independent re-run in the same process
  const Tensor y2 = forward_fp(m.blocks[0], cs.flat, cs.n, cfg.tokens, cfg.heads);
  CHECK(crc32(y2.data(), y2.numel() * sizeof(float)) == checksum);
  CHECK(checksum == 0x61332b7fu);
}

TEST_CASE("quantized forward at 8 bits stays within 2 percent relative error") {
  ModelConfig cfg = small_cfg();
  const ToyModel m = ToyModel::random(cfg);
  const CalibSet cs = gen_calib(1, 16, cfg.tokens, cfg.dim);
  const TierPartition tiers = TierPartition::parse("4/5,6/7,8");
  CalibConfig cc;
  cc.ranks = RankPartition{2, 2, 2};
  CalibratedModel cm = init_calibrated(m, tiers, cc);
  // activation scales straight from the data the block will see
  const auto sites = collect_linear_inputs(m.blocks[0], cs.flat, cs.n, cfg.tokens, cfg.heads);
  for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
    for (int b : tiers.all_bits()) {
      cm.qstate[0][k].act_scales[b] = init_act_scale({sites[k]}, BitWidth(b), 0.999);
    }
  }
  const Tensor y_fp = forward_fp(m.blocks[0], cs.flat, cs.n, cfg.tokens, cfg.heads);
  QuantSpec spec;
  spec.state = &cm.qstate[0];
  spec.weight_bits = 8;
  spec.act_bits = 8;
  spec.tier = Tier::High;
  const Tensor y_q =
      forward_quant(m.blocks[0], Variable(cs.flat), cs.n, cfg.tokens, cfg.heads, spec).value();
  const double rel = mae(y_q, y_fp) / mae(y_fp, Tensor::zeros(y_fp.shape()));
  CHECK(rel < 0.02);
}

TEST_CASE("pass-through quantizers reproduce the full-precision forward bit-for-bit") {
  ModelConfig cfg = small_cfg();
  const ToyModel m = ToyModel::random(cfg);
  const CalibSet cs = gen_calib(2, 8, cfg.tokens, cfg.dim);
  CalibConfig cc;
  cc.ranks = RankPartition{2, 2, 2};
  CalibratedModel cm = init_calibrated(m, TierPartition::parse("4/5,6/7,8"), cc);
  QuantSpec spec;
  spec.state = &cm.qstate[0];
  spec.weight_quant = false;  // pass-through
  const Tensor y_q =
      forward_quant(m.blocks[0], Variable(cs.flat), cs.n, cfg.tokens, cfg.heads, spec).value();
  const Tensor y_fp = forward_fp(m.blocks[0], cs.flat, cs.n, cfg.tokens, cfg.heads);
  CHECK(std::memcmp(y_q.data(), y_fp.data(), y_q.numel() * sizeof(float)) == 0);
}

TEST_CASE("zero-init adapters leave the quantized forward unchanged") {
  ModelConfig cfg = small_cfg();
  const ToyModel m = ToyModel::random(cfg);
  const CalibSet cs = gen_calib(3, 8, cfg.tokens, cfg.dim);
  CalibConfig cc;
  cc.ranks = RankPartition{2, 2, 2};
  CalibratedModel cm = init_calibrated(m, TierPartition::parse("4/5,6/7,8"), cc);
  QuantSpec with, without;
  with.state = without.state = &cm.qstate[0];
  with.weight_bits = without.weight_bits = 4;
  with.tier = without.tier = Tier::Low;
  with.with_adapter = true;
  without.with_adapter = false;
  const Tensor y1 =
      forward_quant(m.blocks[0], Variable(cs.flat), cs.n, cfg.tokens, cfg.heads, with).value();
  const Tensor y2 =
      forward_quant(m.blocks[0], Variable(cs.flat), cs.n, cfg.tokens, cfg.heads, without).value();
  CHECK(std::memcmp(y1.data(), y2.data(), y1.numel() * sizeof(float)) == 0);
}

TEST_CASE("missing quantization state raises an unsupported-bit error") {
  ModelConfig cfg = small_cfg();
  const ToyModel m = ToyModel::random(cfg);
  CalibConfig cc;
  cc.ranks = RankPartition{2, 2, 2};
  CalibratedModel cm = init_calibrated(m, TierPartition::parse("4/5,6/7,8"), cc);
  Rng rng(4);
  const Tensor x = Tensor::normal({cfg.tokens, cfg.dim}, rng);
  QuantSpec spec;
  spec.state = &cm.qstate[0];
  spec.weight_bits = 4;
  spec.act_bits = 4;  // act scales were never initialized
  spec.tier = Tier::Low;
  CHECK_THROWS_AS(forward_quant(m.blocks[0], Variable(x), 1, cfg.tokens, cfg.heads, spec),
                  UnsupportedBitError);
}

TEST_CASE("model forward composes block forwards") {
  ModelConfig cfg = small_cfg();
  const ToyModel m = ToyModel::random(cfg);
  const CalibSet cs = gen_calib(5, 4, cfg.tokens, cfg.dim);
  const std::vector<Tensor> all = forward_fp_all(m, cs.flat, cs.n);
  REQUIRE(all.size() == 2);
  Tensor manual = forward_fp(m.blocks[0], cs.flat, cs.n, cfg.tokens, cfg.heads);
  manual = forward_fp(m.blocks[1], manual, cs.n, cfg.tokens, cfg.heads);
  CHECK(std::memcmp(all[1].data(), manual.data(), manual.numel() * sizeof(float)) == 0);
}

TEST_CASE("calibration data generation") {
  SUBCASE("same seed is byte-identical") {
    const CalibSet a = gen_calib(9, 8, 4, 16);
    const CalibSet b = gen_calib(9, 8, 4, 16);
    CHECK(std::memcmp(a.flat.data(), b.flat.data(), a.flat.numel() * sizeof(float)) == 0);
  }
  SUBCASE("sizes must be positive") {
    CHECK_THROWS_AS(gen_calib(0, 0, 4, 16), ArgumentError);
    CHECK_THROWS_AS(gen_calib(0, 4, 0, 16), ArgumentError);
  }
  SUBCASE("sample mean stays near zero") {
    const CalibSet cs = gen_calib(0, 40, 16, 16);  // 10240 values
    CHECK(std::fabs(mean(cs.flat)) < 0.05);
  }
  SUBCASE("sequence accessor slices the right rows") {
    const CalibSet cs = gen_calib(1, 3, 4, 8);
    const Tensor s1 = cs.sequence(1);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(s1.at(r, c) == cs.flat.at(4 + r, c));
    CHECK_THROWS_AS(cs.sequence(3), ArgumentError);
  }
}

TEST_CASE("hidden dim must divide into heads") {
  ModelConfig cfg = small_cfg();
  cfg.dim = 15;
  CHECK_THROWS_AS(ToyModel::random(cfg), ArgumentError);
}
