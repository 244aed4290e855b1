// SPDX-License-Identifier: Apache-2.0
#include "quept/optimizer.hpp"

#include <atomic>
#include <cmath>

#include "quept/errors.hpp"

namespace quept {

namespace {
std::atomic<std::uint64_t> g_step_count{0};
std::atomic<std::uint64_t> g_write_count{0};
}  // namespace

std::uint64_t optimizer_step_count() { return g_step_count.load(); }
std::uint64_t parameter_write_count() { return g_write_count.load(); }

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<ParamSlice>& slices) {
  g_step_count.fetch_add(1);
  for (const ParamSlice& s : slices) {
    Tensor& value = s.param.mutable_value();
    const Tensor& grad = s.param.grad();
    auto [it, inserted] = states_.try_emplace(s.param.state().get());
    State& st = it->second;
    if (inserted) {
      st.m = Tensor::zeros(value.shape());
      st.v = Tensor::zeros(value.shape());
      st.t = Tensor::zeros(value.shape());
    }

    auto update = [&](std::size_t i) {
      st.t[i] += 1.0f;
      st.m[i] = static_cast<float>(beta1_ * st.m[i] + (1.0 - beta1_) * grad[i]);
      st.v[i] = static_cast<float>(beta2_ * st.v[i] + (1.0 - beta2_) * grad[i] * grad[i]);
      const double mh = st.m[i] / (1.0 - std::pow(beta1_, st.t[i]));
      const double vh = st.v[i] / (1.0 - std::pow(beta2_, st.t[i]));
      value[i] -= static_cast<float>(s.lr * mh / (std::sqrt(vh) + eps_));
      g_write_count.fetch_add(1);
    };

    switch (s.region) {
      case UpdateRegion::All:
        for (std::size_t i = 0; i < value.numel(); ++i) update(i);
        break;
      case UpdateRegion::RowPrefix: {
        const std::size_t cols = value.cols();
        for (std::size_t i = 0; i < s.limit * cols; ++i) update(i);
        break;
      }
      case UpdateRegion::ColPrefix: {
        const std::size_t rows = value.rows(), cols = value.cols();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < s.limit; ++c) update(r * cols + c);
        break;
      }
    }
  }
}

}  // namespace quept
