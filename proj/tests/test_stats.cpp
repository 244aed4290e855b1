// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "oracles.hpp"
#include "quept/errors.hpp"
#include "quept/stats.hpp"

using namespace quept;

TEST_CASE("cosine similarity basics") {
  const Tensor a({2, 2}, {1, 0, 1, 1});
  SUBCASE("self similarity is 1") {
    const Tensor s = cosine_sim_rows(a, a);
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[1] == doctest::Approx(1.0));
  }
  SUBCASE("orthogonal rows score 0") {
    const Tensor b({2, 2}, {0, 1, 1, 1});
    CHECK(cosine_sim_rows(a, b)[0] == doctest::Approx(0.0));
  }
  SUBCASE("hand value 1/sqrt(2)") {
    const Tensor x({1, 2}, {1, 1});
    const Tensor y({1, 2}, {1, 0});
    CHECK(cosine_sim_rows(x, y)[0] == doctest::Approx(0.7071).epsilon(1e-4));
  }
  SUBCASE("zero-norm row yields 0") {
    const Tensor z({1, 2}, {0, 0});
    const Tensor y({1, 2}, {3, 4});
    CHECK(cosine_sim_rows(z, y)[0] == 0.0f);
    CHECK(cosine_sim_rows(y, z)[0] == 0.0f);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(cosine_sim_rows(a, Tensor({3, 2})), DimensionError);
  }
}

TEST_CASE("cosine similarity matches the double oracle on random rows") {
  Rng rng(5);
  const Tensor a = Tensor::normal({20, 8}, rng);
  const Tensor b = Tensor::normal({20, 8}, rng);
  const Tensor s = cosine_sim_rows(a, b);
  for (std::size_t i = 0; i < 20; ++i) {
    std::vector<double> ra(8), rb(8);
    for (std::size_t j = 0; j < 8; ++j) {
      ra[j] = a.at(i, j);
      rb[j] = b.at(i, j);
    }
    CHECK(s[i] == doctest::Approx(oracle::cosine(ra, rb)).epsilon(1e-5));
    CHECK(s[i] <= 1.0f);
    CHECK(s[i] >= -1.0f);
  }
}

TEST_CASE("ks statistic basics") {
  CHECK(ks_statistic(std::vector<float>{1, 2, 3}, std::vector<float>{1, 2, 3}) == 0.0);
  CHECK(ks_statistic(std::vector<float>{0, 0, 0}, std::vector<float>{1, 1, 1}) == 1.0);
  CHECK(ks_statistic(std::vector<float>{0, 1}, std::vector<float>{0, 2}) == 0.5);
  CHECK_THROWS_AS(ks_statistic(std::vector<float>{}, std::vector<float>{1}), ArgumentError);
}

TEST_CASE("ks statistic matches brute-force CDF oracle on 100 seeded pairs") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const std::size_t m = 1 + rng.below(40);
    std::vector<float> a(n), b(m);
    for (float& x : a) x = static_cast<float>(rng.normal());
    for (float& x : b) x = static_cast<float>(rng.normal() + 0.3);
    // occasional exact ties across samples
    if (trial % 7 == 0 && m > 1) b[0] = a[0];
    const double got = ks_statistic(a, b);
    const double want = oracle::ks(a, b);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("quantile of absolute values") {
  std::vector<float> v{-7, 1, 2, 3};
  CHECK(quantile_abs(v, 1.0) == doctest::Approx(7.0));
  CHECK(quantile_abs(v, 0.5) == doctest::Approx(2.5));
  CHECK_THROWS_AS(quantile_abs({}, 0.5), ArgumentError);
  CHECK_THROWS_AS(quantile_abs(v, 0.0), ArgumentError);
  CHECK_THROWS_AS(quantile_abs(v, 1.5), ArgumentError);

  Rng rng(3);
  std::vector<float> big(500);
  for (float& x : big) x = static_cast<float>(rng.normal());
  std::vector<double> bigd(big.begin(), big.end());
  for (double q : {0.1, 0.5, 0.9, 0.999, 1.0}) {
    CHECK(quantile_abs(big, q) == doctest::Approx(oracle::quantile_abs(bigd, q)).epsilon(1e-9));
  }
}
