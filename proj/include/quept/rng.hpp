// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace quept {

/// Seeded generator with portable sampling on top of mt19937.
/// All distributions are implemented here (not via std::*_distribution)
/// so a seed reproduces the same stream on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed)) {}

  /// Uniform double in (0, 1).
  double uniform() { return (static_cast<double>(gen_()) + 0.5) / 4294967296.0; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint32_t below(std::uint32_t n) {
    const std::uint64_t span = 0x100000000ull;
    const std::uint32_t limit = static_cast<std::uint32_t>(span - span % n);
    std::uint32_t r = gen_();
    while (limit != 0 && r >= limit) r = gen_();
    return r % n;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * kPi * u2);
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace quept
