// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "quept/artifact.hpp"
#include "quept/model.hpp"
#include "quept/optimizer.hpp"
#include "quept/tome.hpp"

namespace quept {

/// Target bit set split into low/mid/high tiers. Tiers are disjoint,
/// non-empty, strictly ordered, and their union (>= 3 bits) is the
/// deployable set B.
struct TierPartition {
  std::vector<int> low, mid, high;

  static TierPartition parse(const std::string& text);  // e.g. "4/5,6/7,8"
  std::string to_string() const;
  void validate() const;

  std::vector<int> all_bits() const;  // sorted ascending
  Tier tier_of(int bit) const;        // UnsupportedBitError if bit not in B
  bool contains(int bit) const;
};

enum class LossKind { MAE, MSE };

LossKind parse_loss_kind(const std::string& name);
const char* loss_kind_name(LossKind k);

struct CalibConfig {
  int steps = 200;
  double lr_adapter = 1e-3;
  double lr_clip = 1e-4;
  int batch_size = 32;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::MAE;

  MergePolicy tome = MergePolicy{};
  bool tome_enabled = true;

  bool act_quant = true;
  double act_percentile = 0.999;

  RankPartition ranks{4, 4, 4};
  AdapterMode adapter_mode = AdapterMode::Cascaded;
  bool learn_clips = true;
  bool use_adapters = true;
  bool weight_quant = true;  // disabled only by the identity-pipeline checks
};

/// Per-layer deployment bits; an empty act entry means full-precision
/// activations for that layer.
struct LayerBits {
  int weight_bits = 8;
  std::optional<int> act_bits;
};

struct BitConfig {
  std::vector<LayerBits> layers;

  static BitConfig uniform(std::size_t layer_count, int weight_bits, std::optional<int> act_bits);
  static BitConfig read_file(const std::string& path);
  void write_file(const std::string& path) const;
  double average_weight_bits() const;
};

/// A calibrated model: frozen weights plus trained adapters and clips
/// for every bit in B, deployable at any of them without optimization.
struct CalibratedModel {
  ToyModel model;
  TierPartition tiers;
  CalibConfig calib;
  std::vector<BlockQuantState> qstate;  // [block][layer]

  std::vector<int> bits() const { return tiers.all_bits(); }
  bool supports(int bit) const { return tiers.contains(bit); }
  std::string layer_name(std::size_t block, std::size_t layer) const;
};

/// Fresh (untrained) quantization state: zero-product adapters, neutral
/// clips, no activation scales yet.
CalibratedModel init_calibrated(const ToyModel& model, const TierPartition& tiers,
                                const CalibConfig& cfg);

/// One uniformly random bit per tier, as (b_low, b_mid, b_high).
std::array<int, 3> sample_bits(const TierPartition& tiers, Rng& rng);

/// Per-tier inputs for one block step. With token merging enabled all
/// three entries alias the same merged tensor; with it disabled each
/// tier propagates its own stream.
struct StepInputs {
  Tensor x_fp;                  // full-precision block input (batch)
  Tensor y_fp;                  // full-precision block output (target)
  std::array<Tensor, 3> x_quant;  // indexed by Tier
};

/// Runs the three per-tier reconstruction steps for one block: forward
/// at each sampled bit (high, then mid, then low), loss against the
/// full-precision output, backward, one optimizer step on that tier's
/// reachable parameters. Returns (loss_low, loss_mid, loss_high).
std::array<float, 3> block_step(CalibratedModel& cm, std::size_t block, const StepInputs& in,
                                const std::array<int, 3>& bits, Adam& adam);

/// Block-wise calibration over the whole model. The quantized path into
/// block l+1 is the token-merged fusion of block l's three sampled
/// bit-width outputs; the full-precision path is propagated unquantized.
/// Writes one CSV record per step to `loss_log` when provided.
CalibratedModel calibrate_model(const ToyModel& model, const CalibSet& calib,
                                const TierPartition& tiers, const CalibConfig& cfg,
                                std::ostream* loss_log = nullptr);

/// A deployment-ready model: weights already fake-quantized, activation
/// scales bound. Also keeps the full-precision weights for evaluation.
struct DeployableModel {
  ModelConfig cfg;
  std::vector<BlockWeights> fp_blocks;
  struct Layer {
    Tensor w_hat;
    int weight_bits = 8;
    std::optional<int> act_bits;
    float act_scale = 0.0f;
  };
  std::vector<std::array<Layer, kLayersPerBlock>> layers;

  Tensor forward(const Tensor& x, std::size_t n_seq) const;
  std::vector<Tensor> forward_all(const Tensor& x, std::size_t n_seq) const;
  std::vector<Tensor> forward_fp_all(const Tensor& x, std::size_t n_seq) const;
};

/// Pure selection: binds each layer to its tier slice, clip pair and
/// activation scale for the requested bits. Never optimizes anything;
/// equal configs yield byte-identical deployables.
DeployableModel configure(const CalibratedModel& cm, const BitConfig& cfg);

/// Uniform-bit quantized chain through the calibrated model (no merging;
/// inference-style propagation). Baseline flags mirror QuantSpec.
Tensor calibrated_forward_uniform(const CalibratedModel& cm, const Tensor& x, std::size_t n_seq,
                                  int weight_bits, std::optional<int> act_bits,
                                  bool with_adapter = true, bool neutral_clips = false);

// Artifact round trips.
ModelArtifact calibrated_to_artifact(const CalibratedModel& cm);
CalibratedModel calibrated_from_artifact(const ModelArtifact& artifact);
ModelArtifact deployable_to_artifact(const DeployableModel& dm);
DeployableModel deployable_from_artifact(const ModelArtifact& artifact);

}  // namespace quept
