// SPDX-License-Identifier: Apache-2.0
#include "quept/adapter.hpp"

#include <cmath>

#include "quept/errors.hpp"

namespace quept {

namespace {
void check_partition(const RankPartition& p, std::size_t out_dim, std::size_t in_dim) {
  if (p.r_h < 1) throw ArgumentError("rank partition: r_h must be at least 1");
  if (p.total() > std::min(out_dim, in_dim)) {
    throw ArgumentError("rank partition: total rank " + std::to_string(p.total()) +
                        " exceeds min host dimension " + std::to_string(std::min(out_dim, in_dim)));
  }
}

Variable init_a(std::size_t rank, std::size_t in_dim, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_dim));
  return Variable(Tensor::uniform({rank, in_dim}, rng, -bound, bound), true);
}

Variable init_b(std::size_t out_dim, std::size_t rank) {
  return Variable(Tensor::zeros({out_dim, rank}), true);
}
}  // namespace

std::size_t effective_rank(Tier tier, const RankPartition& partition) {
  switch (tier) {
    case Tier::High: return partition.r_h;
    case Tier::Mid: return partition.r_h + partition.r_m;
    case Tier::Low: return partition.total();
  }
  throw ArgumentError("effective_rank: unknown tier");
}

AdapterMode parse_adapter_mode(const std::string& name) {
  if (name == "cascaded") return AdapterMode::Cascaded;
  if (name == "shared" || name == "fully-shared") return AdapterMode::FullyShared;
  if (name == "independent") return AdapterMode::Independent;
  throw ArgumentError("unknown adapter mode: " + name);
}

const char* adapter_mode_name(AdapterMode mode) {
  switch (mode) {
    case AdapterMode::Cascaded: return "cascaded";
    case AdapterMode::FullyShared: return "shared";
    case AdapterMode::Independent: return "independent";
  }
  return "?";
}

CascadedAdapter::CascadedAdapter(std::size_t out_dim, std::size_t in_dim, RankPartition partition,
                                 Rng& rng)
    : out_dim_(out_dim), in_dim_(in_dim), partition_(partition) {
  check_partition(partition_, out_dim_, in_dim_);
  a_ = init_a(partition_.total(), in_dim_, rng);
  b_ = init_b(out_dim_, partition_.total());
}

Variable CascadedAdapter::compensation(Tier tier) const {
  const std::size_t r = effective_rank(tier, partition_);
  return matmul(slice_cols(b_, 0, r), slice_rows(a_, 0, r));
}

AdapterBank::AdapterBank(AdapterMode mode, std::size_t out_dim, std::size_t in_dim,
                         RankPartition partition, Rng& rng)
    : mode_(mode), out_dim_(out_dim), in_dim_(in_dim), partition_(partition) {
  check_partition(partition_, out_dim_, in_dim_);
  switch (mode_) {
    case AdapterMode::Cascaded:
    case AdapterMode::FullyShared:
      pairs_.push_back(Pair{init_a(partition_.total(), in_dim_, rng), init_b(out_dim_, partition_.total())});
      break;
    case AdapterMode::Independent: {
      const std::size_t ranks[3] = {partition_.r_l, partition_.r_m, partition_.r_h};
      for (std::size_t t = 0; t < 3; ++t) {
        const std::size_t r = std::max<std::size_t>(ranks[t], 1);
        pairs_.push_back(Pair{init_a(r, in_dim_, rng), init_b(out_dim_, r)});
      }
      break;
    }
  }
}

Variable AdapterBank::compensation(Tier tier) const {
  switch (mode_) {
    case AdapterMode::Cascaded: {
      const std::size_t r = effective_rank(tier, partition_);
      return matmul(slice_cols(pairs_[0].b, 0, r), slice_rows(pairs_[0].a, 0, r));
    }
    case AdapterMode::FullyShared:
      return matmul(pairs_[0].b, pairs_[0].a);
    case AdapterMode::Independent: {
      const Pair& p = pairs_[static_cast<std::size_t>(tier)];
      return matmul(p.b, p.a);
    }
  }
  throw ArgumentError("compensation: unknown adapter mode");
}

std::size_t AdapterBank::reachable_rank(Tier tier) const {
  if (mode_ == AdapterMode::Cascaded) return effective_rank(tier, partition_);
  return pairs_[mode_ == AdapterMode::FullyShared ? 0 : static_cast<std::size_t>(tier)]
      .a.value()
      .rows();
}

}  // namespace quept
