// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>

#include "oracles.hpp"
#include "quept/errors.hpp"
#include "quept/tensor.hpp"

using namespace quept;

TEST_CASE("tensor shape and data invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 2}), DimensionError);
  CHECK(Tensor::scalar(3.5f).item() == 3.5f);
  CHECK_THROWS_AS(Tensor({2}, {1.0f, 2.0f}).item(), DimensionError);
}

TEST_CASE("matmul identity") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  const Tensor out = matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == m[i]);
}

TEST_CASE("matmul hand example") {
  const Tensor a({2, 2}, {1, 0, 0, 0});
  const Tensor b({2, 2}, {5, 6, 7, 8});
  const Tensor out = matmul(a, b);
  CHECK(out.at(0, 0) == 5.0f);
  CHECK(out.at(0, 1) == 6.0f);
  CHECK(out.at(1, 0) == 0.0f);
  CHECK(out.at(1, 1) == 0.0f);
}

TEST_CASE("matmul all-ones row times column") {
  const Tensor a({1, 3}, {1, 1, 1});
  const Tensor b({3, 1}, {1, 1, 1});
  CHECK(matmul(a, b).item() == 3.0f);
}

TEST_CASE("matmul dimension error names both shapes") {
  const Tensor a({2, 3});
  const Tensor b({2, 3});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul agrees with double oracle") {
  Rng rng(77);
  const Tensor a = Tensor::normal({5, 7}, rng);
  const Tensor b = Tensor::normal({7, 3}, rng);
  oracle::DMat ad(5, 7), bd(7, 3);
  for (std::size_t i = 0; i < a.numel(); ++i) ad.v[i] = a[i];
  for (std::size_t i = 0; i < b.numel(); ++i) bd.v[i] = b[i];
  const Tensor got = matmul(a, b);
  const oracle::DMat want = oracle::matmul(ad, bd);
  for (std::size_t i = 0; i < got.numel(); ++i) {
    CHECK(got[i] == doctest::Approx(want.v[i]).epsilon(1e-6));
  }
}

TEST_CASE("round half to even matches the independent oracle on 10000 samples") {
  Rng rng(123);
  for (int i = 0; i < 10000; ++i) {
    const float x = static_cast<float>(rng.uniform(-10.0, 10.0));
    CHECK(round_half_even(x) == static_cast<float>(oracle::round_half_even(x)));
  }
  // exact ties
  CHECK(round_half_even(2.5f) == 2.0f);
  CHECK(round_half_even(3.5f) == 4.0f);
  CHECK(round_half_even(-2.5f) == -2.0f);
  CHECK(round_half_even(0.0f) == 0.0f);
  CHECK(round_half_even(-0.5f) == 0.0f);
}

TEST_CASE("elementwise ops reject mismatched shapes") {
  const Tensor a({2, 2});
  const Tensor b({4});
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(sub(a, b), DimensionError);
  CHECK_THROWS_AS(mul(a, b), DimensionError);
  CHECK_THROWS_AS(quept::mae(a, b), DimensionError);
}

TEST_CASE("mae hand examples") {
  CHECK(quept::mae(Tensor({2}, {1, 2}), Tensor({2}, {1, 2})) == 0.0f);
  CHECK(quept::mae(Tensor({2}, {1, 2}), Tensor({2}, {2, 4})) == 1.5f);
  CHECK(quept::mae(Tensor({1}, {-1}), Tensor({1}, {1})) == 2.0f);
}

TEST_CASE("rng streams are deterministic and normal tensors reproduce byte-for-byte") {
  Rng r1(42), r2(42);
  const Tensor a = Tensor::normal({16, 16}, r1);
  const Tensor b = Tensor::normal({16, 16}, r2);
  CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
  // different seed, different stream
  Rng r3(43);
  const Tensor c = Tensor::normal({16, 16}, r3);
  CHECK(std::memcmp(a.data(), c.data(), a.numel() * sizeof(float)) != 0);
}
