// SPDX-License-Identifier: Apache-2.0
#include "quept/quantizer.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "quept/errors.hpp"
#include "quept/stats.hpp"

namespace quept {

namespace {
std::atomic<std::uint64_t> g_degenerate_count{0};
constexpr double kScaleFloor = 1e-8;
}  // namespace

BitWidth::BitWidth(int bits) : bits_(bits) {
  if (bits < 2 || bits > 8) {
    throw ArgumentError("bit-width must be in [2, 8], got " + std::to_string(bits));
  }
}

double BitWidth::qmin() const { return -std::ldexp(1.0, bits_ - 1); }
double BitWidth::qmax() const { return std::ldexp(1.0, bits_ - 1) - 1.0; }
double BitWidth::half_levels() const { return std::ldexp(1.0, bits_ - 1); }

ClipPair ClipPair::neutral() {
  return ClipPair{Variable::scalar(1.0f, true), Variable::scalar(1.0f, true)};
}

std::uint64_t degenerate_range_count() { return g_degenerate_count.load(); }

WeightQuantParams compute_weight_qparams(const Tensor& w_eff, double alpha, double beta, BitWidth b) {
  if (w_eff.empty()) throw ArgumentError("compute_weight_qparams: empty tensor");
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw ArgumentError("compute_weight_qparams: clip multipliers must be positive");
  }
  const double wmax = max_value(w_eff);
  const double wmin = min_value(w_eff);
  const double range = alpha * wmax - beta * wmin;
  WeightQuantParams p;
  if (range <= kScaleFloor) {
    p.scale = static_cast<float>(kScaleFloor);
    p.degenerate = true;
    g_degenerate_count.fetch_add(1);
  } else {
    p.scale = static_cast<float>(range / b.half_levels());
  }
  p.zero_point = static_cast<int>(round_half_even(static_cast<float>(-(beta * wmin) / p.scale)));
  return p;
}

Variable fake_quant_weight(const Variable& w, const Variable& r, const ClipPair& clips, BitWidth b) {
  check_same_shape("fake_quant_weight", w.value(), r.value());
  const Variable w_eff = add(w, r);
  const Variable range =
      sub(mul(clips.alpha, max_all(w_eff)), mul(clips.beta, min_all(w_eff)));
  Variable s_raw = div_scalar(range, b.half_levels());
  if (s_raw.value()[0] <= kScaleFloor) g_degenerate_count.fetch_add(1);
  const Variable s = clip_ste(s_raw, kScaleFloor, std::numeric_limits<double>::infinity());
  const Variable z =
      scale(round_ste(div_scalarv(mul(clips.beta, min_all(w_eff)), s)), -1.0);
  const Variable q =
      clip_ste(round_ste(add_scalarv(div_scalarv(w_eff, s), z)), b.qmin(), b.qmax());
  return mul_scalarv(sub_scalarv(q, z), s);
}

Variable fake_quant_act(const Variable& x, double s_a, BitWidth b) {
  if (!(s_a > 0.0)) throw ArgumentError("fake_quant_act: scale must be positive");
  const Variable q = clip_ste(round_ste(div_scalar(x, s_a)), b.qmin(), b.qmax());
  return scale(q, s_a);
}

Tensor fake_quant_act(const Tensor& x, double s_a, BitWidth b) {
  // Shares the Variable path (untaped) so both entry points agree bit-for-bit.
  return fake_quant_act(Variable(x), s_a, b).value();
}

float init_act_scale(const std::vector<Tensor>& calib_samples, BitWidth b, double percentile) {
  if (calib_samples.empty()) throw ArgumentError("init_act_scale: empty sample list");
  std::vector<float> all;
  std::size_t total = 0;
  for (const Tensor& t : calib_samples) total += t.numel();
  if (total == 0) throw ArgumentError("init_act_scale: samples contain no values");
  all.reserve(total);
  for (const Tensor& t : calib_samples) all.insert(all.end(), t.vec().begin(), t.vec().end());
  const double q = quantile_abs(all, percentile);
  const double s = q / (b.half_levels() - 1.0);
  return static_cast<float>(std::max(s, kScaleFloor));
}

}  // namespace quept
