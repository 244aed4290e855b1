// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "quept/autodiff.hpp"
#include "quept/rng.hpp"

namespace quept {

/// Precision tiers, ordered low to high bit-width.
enum class Tier { Low = 0, Mid = 1, High = 2 };

/// Rank increments per tier. The high tier always contributes and the
/// total never exceeds the host matrix's smaller dimension.
struct RankPartition {
  std::size_t r_h = 0;
  std::size_t r_m = 0;
  std::size_t r_l = 0;

  std::size_t total() const { return r_h + r_m + r_l; }
};

/// Effective adapter rank for a tier: nested prefixes, so lower tiers
/// include every parameter of the higher ones.
std::size_t effective_rank(Tier tier, const RankPartition& partition);

/// How adapter parameters are shared across tiers.
enum class AdapterMode { Cascaded, FullyShared, Independent };

AdapterMode parse_adapter_mode(const std::string& name);
const char* adapter_mode_name(AdapterMode mode);

/// One shared low-rank factor pair serving all tiers through leading
/// slices: the tier-b compensation is B[:, :r_b] * A[:r_b, :]. B starts
/// at zero so every quantized forward initially matches the adapter-free
/// one; A starts small-random.
class CascadedAdapter {
 public:
  CascadedAdapter(std::size_t out_dim, std::size_t in_dim, RankPartition partition, Rng& rng);

  /// Compensation R for a tier; differentiable, and the backward pass
  /// touches only the sliced prefix of A and B.
  Variable compensation(Tier tier) const;

  Variable& a() { return a_; }
  Variable& b() { return b_; }
  const Variable& a() const { return a_; }
  const Variable& b() const { return b_; }
  const RankPartition& partition() const { return partition_; }
  std::size_t out_dim() const { return out_dim_; }
  std::size_t in_dim() const { return in_dim_; }

 private:
  std::size_t out_dim_;
  std::size_t in_dim_;
  RankPartition partition_;
  Variable a_;  // [r_total x in_dim]
  Variable b_;  // [out_dim x r_total]
};

/// Adapter construction rule behind the three sharing strategies, all at
/// equal total rank: Cascaded nests prefixes, FullyShared uses the full
/// product for every tier, Independent keeps three disjoint pairs with
/// per-tier ranks (r_h, r_m, r_l).
class AdapterBank {
 public:
  AdapterBank(AdapterMode mode, std::size_t out_dim, std::size_t in_dim, RankPartition partition,
              Rng& rng);

  Variable compensation(Tier tier) const;
  AdapterMode mode() const { return mode_; }
  const RankPartition& partition() const { return partition_; }

  /// Factor pairs owned by the bank: one for Cascaded/FullyShared,
  /// three (indexed by Tier) for Independent.
  std::size_t pair_count() const { return pairs_.size(); }
  Variable& a(std::size_t i) { return pairs_[i].a; }
  Variable& b(std::size_t i) { return pairs_[i].b; }
  const Variable& a(std::size_t i) const { return pairs_[i].a; }
  const Variable& b(std::size_t i) const { return pairs_[i].b; }

  /// Rank prefix of pair 0 reachable by `tier` (Cascaded mode); used to
  /// restrict optimizer updates to the slices the tier may touch.
  std::size_t reachable_rank(Tier tier) const;

 private:
  struct Pair {
    Variable a;
    Variable b;
  };
  AdapterMode mode_;
  std::size_t out_dim_;
  std::size_t in_dim_;
  RankPartition partition_;
  std::vector<Pair> pairs_;
};

}  // namespace quept
