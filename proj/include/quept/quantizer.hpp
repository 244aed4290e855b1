// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "quept/autodiff.hpp"
#include "quept/tensor.hpp"

namespace quept {

/// Quantization bit-width, valid range 2..8.
class BitWidth {
 public:
  explicit BitWidth(int bits);
  int bits() const { return bits_; }
  /// Integer grid bounds: [-2^(b-1), 2^(b-1) - 1].
  double qmin() const;
  double qmax() const;
  /// 2^(b-1), the scale denominator used for weights.
  double half_levels() const;

  friend bool operator==(const BitWidth& a, const BitWidth& b) { return a.bits_ == b.bits_; }

 private:
  int bits_;
};

/// Learnable clipping multipliers for one weight matrix at one bit-width.
/// alpha scales the max, beta scales the min; both stay positive.
struct ClipPair {
  Variable alpha;
  Variable beta;

  static ClipPair neutral();  // alpha = beta = 1
};

/// Clip parameters for one weight matrix across every target bit-width.
using ClipSet = std::map<int, ClipPair>;

struct WeightQuantParams {
  float scale = 0.0f;    // s_w > 0
  int zero_point = 0;    // z_w
  bool degenerate = false;
};

/// Frozen per-(site, bit-width) activation scales.
using ActQuantParams = std::map<int, float>;

/// Count of degenerate-range events (clipped range <= 0 replaced by the
/// 1e-8 floor) since process start. Diagnostic only.
std::uint64_t degenerate_range_count();

/// Scale and zero-point for the compensated weight w_eff = W + BA:
///   s_w = (alpha * max(w_eff) - beta * min(w_eff)) / 2^(b-1)
///   z_w = -round(beta * min(w_eff) / s_w)
/// A non-positive range falls back to scale 1e-8 and flags `degenerate`.
WeightQuantParams compute_weight_qparams(const Tensor& w_eff, double alpha, double beta, BitWidth b);

/// Fake-quantizes w + r with scale/zero-point recomputed from the current
/// clips on every call. round/clip enter the tape as STE ops, so gradients
/// reach r, alpha and beta.
Variable fake_quant_weight(const Variable& w, const Variable& r, const ClipPair& clips, BitWidth b);

/// Symmetric activation fake-quantization with a frozen scale:
///   x_hat = s_a * clip(round(x / s_a), -2^(b-1), 2^(b-1)-1)
/// Gradients flow to x via the STEs; s_a is never differentiated.
Variable fake_quant_act(const Variable& x, double s_a, BitWidth b);
Tensor fake_quant_act(const Tensor& x, double s_a, BitWidth b);

/// Initializes an activation scale from calibration tensors:
/// quantile(|x|, percentile) / (2^(b-1) - 1), floored at 1e-8.
float init_act_scale(const std::vector<Tensor>& calib_samples, BitWidth b, double percentile = 0.999);

}  // namespace quept
