// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "quept/tensor.hpp"

namespace quept {

/// Per-row cosine similarity of two [t x d] tensors, values in [-1, 1].
/// A row with zero norm on either side yields similarity 0.
Tensor cosine_sim_rows(const Tensor& a, const Tensor& b);

/// Two-sample Kolmogorov-Smirnov statistic: the maximum absolute gap
/// between the two empirical CDFs. Result lies in [0, 1].
double ks_statistic(const std::vector<float>& a, const std::vector<float>& b);
double ks_statistic(const Tensor& a, const Tensor& b);

/// Quantile of |x| over all provided values with linear interpolation
/// between order statistics. `q` must be in (0, 1]; q = 1 is the max.
double quantile_abs(const std::vector<float>& values, double q);

}  // namespace quept
