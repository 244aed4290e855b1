// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "quept/autodiff.hpp"

namespace quept {

/// Which elements of a parameter a step may touch. Cascaded adapters
/// restrict per-tier updates to the leading slice of A's rows / B's
/// columns; everything else uses All.
enum class UpdateRegion { All, RowPrefix, ColPrefix };

struct ParamSlice {
  Variable param;
  double lr = 1e-3;
  UpdateRegion region = UpdateRegion::All;
  std::size_t limit = 0;  // rows or cols for the prefix regions
};

/// Process-wide counters used by tests and the CLI to verify that
/// configuration and evaluation paths never optimize anything.
std::uint64_t optimizer_step_count();
std::uint64_t parameter_write_count();

/// Adam with per-element moment state and per-element timestep, so a
/// step restricted to a slice leaves every other element's value and
/// state untouched.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update to each slice using its gradient. Gradients are
  /// read as-is; callers zero them between steps.
  void step(const std::vector<ParamSlice>& slices);

 private:
  struct State {
    Tensor m;
    Tensor v;
    Tensor t;
  };
  double beta1_, beta2_, eps_;
  std::unordered_map<const detail::VarState*, State> states_;
};

}  // namespace quept
