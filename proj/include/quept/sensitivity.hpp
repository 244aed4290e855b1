// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "quept/recon.hpp"

namespace quept {

/// Per-(layer, bit) KL divergence scores; non-negative and finite, 0
/// where quantization at that bit is exact.
struct SensitivityTable {
  std::vector<int> bits;       // ascending
  std::size_t layer_count = 0;
  std::vector<double> kl;      // layer-major: kl[layer * bits.size() + bit_index]

  double at(std::size_t layer, std::size_t bit_index) const {
    return kl[layer * bits.size() + bit_index];
  }
  double& at(std::size_t layer, std::size_t bit_index) {
    return kl[layer * bits.size() + bit_index];
  }

  void write_csv(const std::string& path) const;
  static SensitivityTable read_csv(const std::string& path);
};

/// Average weight bit-width target over `layer_count` layers. The integer
/// total-bit budget is floor(target * layer_count).
struct Budget {
  double target_avg = 8.0;
  std::size_t layer_count = 0;
};

struct Allocation {
  std::vector<int> bits_per_layer;
  double achieved_avg = 0.0;
  double total_sensitivity = 0.0;
};

/// Mean over token rows of KL(softmax(fp_row) || softmax(q_row)),
/// probabilities clamped at 1e-10 before the log. Always >= 0; exactly 0
/// for identical inputs.
double kl_softmax_rows(const Tensor& z_fp, const Tensor& z_q);

/// Sensitivity of one layer: KL of the final model output, averaged over
/// calibration tokens, with only `layer` quantized (weight-only) at
/// `bit`; every other layer runs full precision.
double layer_sensitivity(const CalibratedModel& cm, const CalibSet& calib, std::size_t layer,
                         int bit);

/// One table column: the sensitivity of every layer at `bit`.
std::vector<double> measure_sensitivity(const CalibratedModel& cm, const CalibSet& calib, int bit);

/// Full table over every bit in the calibrated set.
SensitivityTable build_sensitivity_table(const CalibratedModel& cm, const CalibSet& calib);

/// Exact minimizer of total sensitivity subject to the integer bit
/// budget, by dynamic programming over (layer, remaining bits). Ties
/// break toward higher bits at earlier layers.
Allocation allocate_dp(const SensitivityTable& table, const Budget& budget);

/// Exhaustive oracle with the same feasibility rule and tie-break;
/// refuses instances with more than 10^7 assignments.
Allocation allocate_bruteforce(const SensitivityTable& table, const Budget& budget);

}  // namespace quept
