// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "quept/adapter.hpp"
#include "quept/autodiff.hpp"
#include "quept/quantizer.hpp"
#include "quept/tensor.hpp"

namespace quept {

struct ModelConfig {
  std::size_t blocks = 2;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t tokens = 16;
  std::size_t mlp_ratio = 4;
  std::uint64_t seed = 0;
};

/// The four quantizable weight matrices of a block, in forward order.
inline constexpr std::array<const char*, 4> kLayerNames = {"qkv", "attn_out", "mlp_up", "mlp_down"};
inline constexpr std::size_t kLayersPerBlock = 4;

/// Pre-norm transformer block weights. Weights are stored [out x in];
/// biases stay full precision everywhere.
struct BlockWeights {
  Tensor w_qkv, b_qkv;
  Tensor w_out, b_out;
  Tensor w_up, b_up;
  Tensor w_down, b_down;

  const Tensor& weight(std::size_t layer) const;
  Tensor& weight(std::size_t layer);
  const Tensor& bias(std::size_t layer) const;
  Tensor& bias(std::size_t layer);
};

struct ToyModel {
  ModelConfig cfg;
  std::vector<BlockWeights> blocks;

  static ToyModel random(const ModelConfig& cfg);
  std::size_t layer_count() const { return blocks.size() * kLayersPerBlock; }
};

/// Synthetic calibration sequences, stored flattened [(n*t) x d].
struct CalibSet {
  Tensor flat;
  std::size_t n = 0;
  std::size_t t = 0;
  std::size_t d = 0;
  std::uint64_t seed = 0;

  Tensor sequence(std::size_t i) const;  // [t x d]
};

/// Standard-normal token features plus a per-sequence low-rank term so
/// blocks have learnable structure. Deterministic under the seed.
CalibSet gen_calib(std::uint64_t seed, std::size_t n, std::size_t t, std::size_t d);

/// Quantization state attached to one linear layer.
struct LayerQuantState {
  AdapterBank adapter;
  ClipSet clips;            // bit -> (alpha, beta)
  ActQuantParams act_scales;  // bit -> s_a

  explicit LayerQuantState(AdapterBank a) : adapter(std::move(a)) {}
};

using BlockQuantState = std::vector<LayerQuantState>;  // one entry per layer

/// How a quantized forward should treat one block.
struct QuantSpec {
  const BlockQuantState* state = nullptr;
  int weight_bits = 8;
  std::optional<int> act_bits;  // empty = full-precision activations
  Tier tier = Tier::High;
  bool with_adapter = true;  // false: compensation forced to zero
  bool neutral_clips = false;  // true: alpha = beta = 1 regardless of state
  bool weight_quant = true;  // false: weights pass through untouched
};

/// x -> linear-layer output; lets fp and quantized forwards share one
/// block topology.
using LinearFn =
    std::function<Variable(std::size_t layer, const Tensor& w, const Tensor& bias, const Variable& x)>;

/// Pre-norm block: x + Attn(LN(x)) followed by + MLP(LN(.)).
/// `x` is flattened [(n_seq*tokens) x dim].
Variable block_forward(const BlockWeights& bw, const Variable& x, std::size_t n_seq,
                       std::size_t tokens, std::size_t heads, const LinearFn& linear);

/// Full-precision block output (no quantizers anywhere).
Tensor forward_fp(const BlockWeights& bw, const Tensor& x, std::size_t n_seq, std::size_t tokens,
                  std::size_t heads);

/// Quantized block output per `spec`; differentiable when a tape is bound.
Variable forward_quant(const BlockWeights& bw, const Variable& x, std::size_t n_seq,
                       std::size_t tokens, std::size_t heads, const QuantSpec& spec);

/// Full-precision forward through every block; returns the output after
/// each block, in order.
std::vector<Tensor> forward_fp_all(const ToyModel& m, const Tensor& x, std::size_t n_seq);

/// Inputs seen by each linear layer of a block during a full-precision
/// forward, indexed like kLayerNames. Used to initialize activation scales.
std::array<Tensor, kLayersPerBlock> collect_linear_inputs(const BlockWeights& bw, const Tensor& x,
                                                          std::size_t n_seq, std::size_t tokens,
                                                          std::size_t heads);

}  // namespace quept
