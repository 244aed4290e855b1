// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "quept/rng.hpp"
#include "quept/tensor.hpp"

namespace quept {

/// Token fusion strategies for combining the three per-tier feature maps.
enum class MergeCase { RandomSelection, UniformFusion, SelectiveMerge };

MergeCase parse_merge_case(const std::string& name);
const char* merge_case_name(MergeCase c);

/// Fusion policy. Lambdas are normalized to sum to 1 on construction;
/// the anchor fraction p applies to SelectiveMerge only.
struct MergePolicy {
  MergeCase merge_case = MergeCase::SelectiveMerge;
  double p = 0.5;
  std::array<double, 3> lambdas = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // (high, mid, low)

  static MergePolicy make(MergeCase c, double p, std::array<double, 3> lambdas);
};

/// Indices of anchored tokens, unique and in range.
struct AnchorSet {
  std::vector<std::size_t> indices;

  bool contains(std::size_t k) const;
};

/// Picks the round(p*t) tokens whose high-bit and low-bit rows are most
/// cosine-similar; ties break toward the lower index.
AnchorSet select_anchors(const Tensor& x_high, const Tensor& x_low, double p);

/// Merges the three per-tier feature maps [t x d] into one:
///  - SelectiveMerge: anchored tokens copy the high-bit row, the rest get
///    lambda1*high + lambda2*mid + lambda3*low.
///  - UniformFusion: every token gets the normalized 1:1:1 fusion.
///  - RandomSelection: every token copies one of the three rows, chosen
///    uniformly by `rng`.
Tensor merge(const Tensor& x_low, const Tensor& x_mid, const Tensor& x_high, const AnchorSet& phi,
             const MergePolicy& policy, Rng& rng);

/// Per-token K-S statistic between the full-precision and quantized
/// feature values, sorted by statistic descending (index ascending on
/// ties). Diagnostic for the report command.
std::vector<std::pair<std::size_t, double>> token_divergence_report(const Tensor& x_fp,
                                                                    const Tensor& x_q);

}  // namespace quept
