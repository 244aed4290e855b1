// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "quept/errors.hpp"
#include "quept/tome.hpp"

using namespace quept;

namespace {
Tensor rows_with_similarity(const std::vector<double>& cosines) {
  // paired with the reference rows (1, 0): row k = (cos, sin)
  Tensor t({cosines.size(), 2});
  for (std::size_t k = 0; k < cosines.size(); ++k) {
    t.at(k, 0) = static_cast<float>(cosines[k]);
    t.at(k, 1) = static_cast<float>(std::sqrt(1.0 - cosines[k] * cosines[k]));
  }
  return t;
}

Tensor reference_rows(std::size_t t) {
  Tensor out({t, 2});
  for (std::size_t k = 0; k < t; ++k) out.at(k, 0) = 1.0f;
  return out;
}
}  // namespace

TEST_CASE("anchor selection picks the most similar tokens") {
  const Tensor x_h = reference_rows(4);
  const Tensor x_l = rows_with_similarity({0.9, 0.1, 0.8, 0.1});
  SUBCASE("p=1 anchors everything") {
    CHECK(select_anchors(x_h, x_l, 1.0).indices == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SUBCASE("p=0 anchors nothing") {
    CHECK(select_anchors(x_h, x_l, 0.0).indices.empty());
  }
  SUBCASE("top half") {
    CHECK(select_anchors(x_h, x_l, 0.5).indices == std::vector<std::size_t>{0, 2});
  }
  SUBCASE("ties break toward the lower index") {
    const Tensor tied = rows_with_similarity({0.5, 0.5, 0.3});
    CHECK(select_anchors(reference_rows(3), tied, 1.0 / 3.0).indices ==
          std::vector<std::size_t>{0});
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(select_anchors(x_h, Tensor({2, 2}), 0.5), DimensionError);
  }
}

TEST_CASE("merge policy normalizes fusion weights") {
  const MergePolicy mp = MergePolicy::make(MergeCase::SelectiveMerge, 0.5, {2.0, 1.0, 1.0});
  CHECK(mp.lambdas[0] == doctest::Approx(0.5));
  CHECK(mp.lambdas[1] == doctest::Approx(0.25));
  CHECK(mp.lambdas[2] == doctest::Approx(0.25));
  CHECK_THROWS_AS(MergePolicy::make(MergeCase::SelectiveMerge, 1.5, {1, 1, 1}), ArgumentError);
  CHECK_THROWS_AS(MergePolicy::make(MergeCase::SelectiveMerge, 0.5, {0, 0, 0}), ArgumentError);
  CHECK_THROWS_AS(MergePolicy::make(MergeCase::SelectiveMerge, 0.5, {-1, 1, 1}), ArgumentError);
}

TEST_CASE("selective merge degenerate cases are exact") {
  Rng rng(1);
  const Tensor x_l = Tensor::normal({6, 4}, rng);
  const Tensor x_m = Tensor::normal({6, 4}, rng);
  const Tensor x_h = Tensor::normal({6, 4}, rng);
  Rng merge_rng(2);

  SUBCASE("p=1: output is the high-bit map bit-for-bit") {
    const AnchorSet phi = select_anchors(x_h, x_l, 1.0);
    const MergePolicy mp = MergePolicy::make(MergeCase::SelectiveMerge, 1.0, {1, 1, 1});
    const Tensor out = merge(x_l, x_m, x_h, phi, mp, merge_rng);
    CHECK(std::memcmp(out.data(), x_h.data(), out.numel() * sizeof(float)) == 0);
  }
  SUBCASE("empty anchors with lambda (1,0,0): still the high-bit map") {
    const MergePolicy mp = MergePolicy::make(MergeCase::SelectiveMerge, 0.0, {1, 0, 0});
    const Tensor out = merge(x_l, x_m, x_h, AnchorSet{}, mp, merge_rng);
    CHECK(std::memcmp(out.data(), x_h.data(), out.numel() * sizeof(float)) == 0);
  }
  SUBCASE("anchored rows are bit-identical to the high map") {
    const MergePolicy mp = MergePolicy::make(MergeCase::SelectiveMerge, 0.5, {1, 1, 1});
    AnchorSet phi;
    phi.indices = {1, 4};
    const Tensor out = merge(x_l, x_m, x_h, phi, mp, merge_rng);
    for (std::size_t k : phi.indices)
      for (std::size_t j = 0; j < 4; ++j) CHECK(out.at(k, j) == x_h.at(k, j));
  }
  SUBCASE("anchor index out of range") {
    AnchorSet phi;
    phi.indices = {6};
    const MergePolicy mp = MergePolicy::make(MergeCase::SelectiveMerge, 0.5, {1, 1, 1});
    CHECK_THROWS_AS(merge(x_l, x_m, x_h, phi, mp, merge_rng), ArgumentError);
  }
}

TEST_CASE("uniform fusion is the elementwise mean") {
  const Tensor x_h({1, 1}, {3.0f});
  const Tensor x_m({1, 1}, {0.0f});
  const Tensor x_l({1, 1}, {0.0f});
  Rng rng(3);
  const MergePolicy mp = MergePolicy::make(MergeCase::UniformFusion, 0.0, {1, 1, 1});
  CHECK(merge(x_l, x_m, x_h, AnchorSet{}, mp, rng).item() == doctest::Approx(1.0).epsilon(1e-7));

  Rng data_rng(4);
  const Tensor a = Tensor::normal({5, 3}, data_rng);
  const Tensor b = Tensor::normal({5, 3}, data_rng);
  const Tensor c = Tensor::normal({5, 3}, data_rng);
  const Tensor out = merge(a, b, c, AnchorSet{}, mp, rng);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    CHECK(out[i] == doctest::Approx((a[i] + b[i] + c[i]) / 3.0).epsilon(1e-7));
  }
}

TEST_CASE("merged outputs stay inside the per-entry envelope") {
  Rng data_rng(5);
  const Tensor x_l = Tensor::normal({8, 4}, data_rng);
  const Tensor x_m = Tensor::normal({8, 4}, data_rng);
  const Tensor x_h = Tensor::normal({8, 4}, data_rng);
  Rng rng(6);
  for (MergeCase mc : {MergeCase::UniformFusion, MergeCase::SelectiveMerge}) {
    const MergePolicy mp = MergePolicy::make(mc, 0.25, {1, 2, 3});
    const AnchorSet phi = select_anchors(x_h, x_l, mp.p);
    const Tensor out = merge(x_l, x_m, x_h, phi, mp, rng);
    CHECK(out.same_shape(x_l));
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const float lo = std::min({x_l[i], x_m[i], x_h[i]});
      const float hi = std::max({x_l[i], x_m[i], x_h[i]});
      CHECK(out[i] >= lo - 1e-6f);
      CHECK(out[i] <= hi + 1e-6f);
    }
  }
}

TEST_CASE("random selection copies rows and is seed-deterministic") {
  Rng data_rng(7);
  const Tensor x_l = Tensor::normal({16, 4}, data_rng);
  const Tensor x_m = Tensor::normal({16, 4}, data_rng);
  const Tensor x_h = Tensor::normal({16, 4}, data_rng);
  const MergePolicy mp = MergePolicy::make(MergeCase::RandomSelection, 0.0, {1, 1, 1});

  Rng r1(42), r2(42), r3(43);
  const Tensor out1 = merge(x_l, x_m, x_h, AnchorSet{}, mp, r1);
  const Tensor out2 = merge(x_l, x_m, x_h, AnchorSet{}, mp, r2);
  CHECK(std::memcmp(out1.data(), out2.data(), out1.numel() * sizeof(float)) == 0);

  // every token row matches one of the three sources exactly
  for (std::size_t k = 0; k < 16; ++k) {
    bool matches = false;
    for (const Tensor* src : {&x_l, &x_m, &x_h}) {
      bool all = true;
      for (std::size_t j = 0; j < 4; ++j) all = all && out1.at(k, j) == src->at(k, j);
      matches = matches || all;
    }
    CHECK(matches);
  }
  // a different seed eventually picks differently
  const Tensor out3 = merge(x_l, x_m, x_h, AnchorSet{}, mp, r3);
  CHECK(std::memcmp(out1.data(), out3.data(), out1.numel() * sizeof(float)) != 0);
}

TEST_CASE("token divergence report") {
  Rng rng(8);
  const Tensor x = Tensor::normal({6, 16}, rng);
  SUBCASE("identical features diverge nowhere") {
    for (const auto& [tok, ks] : token_divergence_report(x, x)) CHECK(ks == 0.0);
  }
  SUBCASE("a shifted token ranks first with statistic 1") {
    Tensor shifted = x;
    for (std::size_t j = 0; j < 16; ++j) shifted.at(3, j) += 10.0f;
    const auto report = token_divergence_report(x, shifted);
    CHECK(report.front().first == 3);
    CHECK(report.front().second == 1.0);
    for (const auto& [tok, ks] : report) {
      CHECK(ks >= 0.0);
      CHECK(ks <= 1.0);
    }
    // sorted descending
    for (std::size_t i = 1; i < report.size(); ++i) {
      CHECK(report[i - 1].second >= report[i].second);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(token_divergence_report(x, Tensor({3, 3})), DimensionError);
  }
}
