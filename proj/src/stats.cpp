// SPDX-License-Identifier: Apache-2.0
#include "quept/stats.hpp"

#include <algorithm>
#include <cmath>

#include "quept/errors.hpp"

namespace quept {

Tensor cosine_sim_rows(const Tensor& a, const Tensor& b) {
  check_same_shape("cosine_sim_rows", a, b);
  check_2d("cosine_sim_rows", a);
  const std::size_t t = a.rows(), d = a.cols();
  Tensor out({t});
  for (std::size_t i = 0; i < t; ++i) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = a.at(i, j), y = b.at(i, j);
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
      out[i] = 0.0f;
      continue;
    }
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    out[i] = static_cast<float>(c);
  }
  return out;
}

double ks_statistic(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.empty() || b.empty()) throw ArgumentError("ks_statistic: empty sample");
  std::vector<float> sa(a), sb(b);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double n = static_cast<double>(sa.size());
  const double m = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const float v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] <= v) ++i;
    while (j < sb.size() && sb[j] <= v) ++j;
    const double gap = std::fabs(static_cast<double>(i) / n - static_cast<double>(j) / m);
    if (gap > best) best = gap;
  }
  // Whichever sample remains can only shrink the gap back toward 0,
  // except the partial tail which is covered by the loop's last step.
  return best;
}

double ks_statistic(const Tensor& a, const Tensor& b) { return ks_statistic(a.vec(), b.vec()); }

double quantile_abs(const std::vector<float>& values, double q) {
  if (values.empty()) throw ArgumentError("quantile_abs: empty sample");
  if (!(q > 0.0) || q > 1.0) throw ArgumentError("quantile_abs: quantile fraction must be in (0, 1]");
  std::vector<float> mags(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) mags[i] = std::fabs(values[i]);
  std::sort(mags.begin(), mags.end());
  const double h = q * static_cast<double>(mags.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, mags.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return static_cast<double>(mags[lo]) + frac * (static_cast<double>(mags[hi]) - mags[lo]);
}

}  // namespace quept
