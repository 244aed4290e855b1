// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "quept/adapter.hpp"
#include "quept/errors.hpp"

using namespace quept;

namespace {
void randomize(CascadedAdapter& ad, Rng& rng) {
  ad.a().mutable_value() = Tensor::normal(ad.a().value().shape(), rng, 0.5f);
  ad.b().mutable_value() = Tensor::normal(ad.b().value().shape(), rng, 0.5f);
}
}  // namespace

TEST_CASE("effective rank follows the cascaded pattern") {
  const RankPartition p{4, 4, 4};
  CHECK(effective_rank(Tier::High, p) == 4);
  CHECK(effective_rank(Tier::Mid, p) == 8);
  CHECK(effective_rank(Tier::Low, p) == 12);
  CHECK(effective_rank(Tier::Low, RankPartition{16, 16, 16}) == 48);
  const RankPartition shared{1, 0, 0};
  CHECK(effective_rank(Tier::High, shared) == 1);
  CHECK(effective_rank(Tier::Mid, shared) == 1);
  CHECK(effective_rank(Tier::Low, shared) == 1);
}

TEST_CASE("rank partition is validated against the host shape") {
  Rng rng(0);
  CHECK_THROWS_AS(CascadedAdapter(8, 8, RankPartition{0, 1, 1}, rng), ArgumentError);
  CHECK_THROWS_AS(CascadedAdapter(8, 8, RankPartition{4, 4, 4}, rng), ArgumentError);  // 12 > 8
  CHECK_NOTHROW(CascadedAdapter(16, 16, RankPartition{4, 4, 4}, rng));
}

TEST_CASE("fresh adapters compensate nothing") {
  Rng rng(1);
  CascadedAdapter ad(16, 16, RankPartition{4, 4, 4}, rng);
  for (Tier t : {Tier::High, Tier::Mid, Tier::Low}) {
    const Tensor r = ad.compensation(t).value();
    for (std::size_t i = 0; i < r.numel(); ++i) CHECK(r[i] == 0.0f);
  }
}

TEST_CASE("prefix decomposition: low-tier minus mid-tier equals the tail product") {
  Rng rng(2);
  CascadedAdapter ad(8, 8, RankPartition{2, 2, 2}, rng);
  randomize(ad, rng);
  const Tensor low = ad.compensation(Tier::Low).value();
  const Tensor mid = ad.compensation(Tier::Mid).value();

  // tail product over ranks [4, 6)
  Tensor tail_b({8, 2}), tail_a({2, 8});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 2; ++j) tail_b.at(i, j) = ad.b().value().at(i, 4 + j);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 8; ++j) tail_a.at(i, j) = ad.a().value().at(4 + i, j);
  const Tensor tail = matmul(tail_b, tail_a);
  CHECK(max_abs_diff(sub(low, mid), tail) <= 1e-6f);
}

TEST_CASE("prefix inheritance holds on 20 seeded adapters") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    CascadedAdapter ad(16, 16, RankPartition{4, 4, 4}, rng);
    randomize(ad, rng);
    const Tensor low = ad.compensation(Tier::Low).value();
    const Tensor mid = ad.compensation(Tier::Mid).value();
    const Tensor high = ad.compensation(Tier::High).value();

    Tensor tail_b({16, 8}), tail_a({8, 16});
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 8; ++j) tail_b.at(i, j) = ad.b().value().at(i, 4 + j);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 16; ++j) tail_a.at(i, j) = ad.a().value().at(4 + i, j);
    CHECK(max_abs_diff(sub(low, high), matmul(tail_b, tail_a)) <= 1e-6f);
    CHECK(max_abs_diff(low, mid) > 0.0f);  // tails genuinely contribute
  }
}

TEST_CASE("single-group partition makes every tier identical") {
  Rng rng(3);
  CascadedAdapter ad(8, 8, RankPartition{3, 0, 0}, rng);
  randomize(ad, rng);
  const Tensor h = ad.compensation(Tier::High).value();
  const Tensor m = ad.compensation(Tier::Mid).value();
  const Tensor l = ad.compensation(Tier::Low).value();
  CHECK(max_abs_diff(h, m) == 0.0f);
  CHECK(max_abs_diff(h, l) == 0.0f);
}

TEST_CASE("gradient locality: high-tier backward never touches the tail") {
  Rng rng(4);
  CascadedAdapter ad(8, 8, RankPartition{2, 2, 2}, rng);
  randomize(ad, rng);
  ad.a().zero_grad();
  ad.b().zero_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(ad.compensation(Tier::High)));
  }
  const std::size_t r_h = 2;
  bool leading_nonzero = false;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      if (i >= r_h) {
        CHECK(ad.a().grad().at(i, j) == 0.0f);
        CHECK(ad.b().grad().at(j, i) == 0.0f);
      } else if (ad.a().grad().at(i, j) != 0.0f) {
        leading_nonzero = true;
      }
    }
  }
  CHECK(leading_nonzero);
}

TEST_CASE("gradient diffusion: low-tier backward reaches the shared prefix") {
  Rng rng(5);
  CascadedAdapter ad(8, 8, RankPartition{2, 2, 2}, rng);
  randomize(ad, rng);
  ad.a().zero_grad();
  ad.b().zero_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(ad.compensation(Tier::Low)));
  }
  double prefix_norm = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 8; ++j) prefix_norm += std::fabs(ad.a().grad().at(i, j));
  CHECK(prefix_norm > 0.0);
}

TEST_CASE("adapter bank sharing strategies") {
  const RankPartition p{4, 4, 4};
  SUBCASE("fully shared: one pair, identical slice for all tiers") {
    Rng rng(6);
    AdapterBank bank(AdapterMode::FullyShared, 16, 16, p, rng);
    CHECK(bank.pair_count() == 1);
    CHECK(bank.a(0).value().rows() == 12);  // total rank
    bank.b(0).mutable_value() = Tensor::normal({16, 12}, rng);
    CHECK(max_abs_diff(bank.compensation(Tier::High).value(),
                       bank.compensation(Tier::Low).value()) == 0.0f);
  }
  SUBCASE("independent: three disjoint pairs with per-group ranks") {
    Rng rng(7);
    AdapterBank bank(AdapterMode::Independent, 16, 16, p, rng);
    CHECK(bank.pair_count() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(bank.a(i).value().rows() == 4);
    // tweaking the low pair leaves the high compensation untouched
    const Tensor high_before = bank.compensation(Tier::High).value();
    bank.b(static_cast<std::size_t>(Tier::Low)).mutable_value() = Tensor::normal({16, 4}, rng);
    CHECK(max_abs_diff(bank.compensation(Tier::High).value(), high_before) == 0.0f);
    CHECK(max_abs_diff(bank.compensation(Tier::Low).value(),
                       Tensor::zeros({16, 16})) > 0.0f);
  }
  SUBCASE("cascaded bank matches the standalone adapter semantics") {
    Rng rng(8);
    AdapterBank bank(AdapterMode::Cascaded, 16, 16, p, rng);
    CHECK(bank.pair_count() == 1);
    CHECK(bank.reachable_rank(Tier::High) == 4);
    CHECK(bank.reachable_rank(Tier::Mid) == 8);
    CHECK(bank.reachable_rank(Tier::Low) == 12);
  }
  SUBCASE("unknown mode name is rejected") {
    CHECK_THROWS_AS(parse_adapter_mode("mixed"), ArgumentError);
    CHECK(parse_adapter_mode("cascaded") == AdapterMode::Cascaded);
    CHECK(parse_adapter_mode("shared") == AdapterMode::FullyShared);
    CHECK(parse_adapter_mode("independent") == AdapterMode::Independent);
  }
}
