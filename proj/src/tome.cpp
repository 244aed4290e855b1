// SPDX-License-Identifier: Apache-2.0
#include "quept/tome.hpp"

#include <algorithm>
#include <cmath>

#include "quept/errors.hpp"
#include "quept/stats.hpp"

namespace quept {

MergeCase parse_merge_case(const std::string& name) {
  if (name == "random") return MergeCase::RandomSelection;
  if (name == "uniform") return MergeCase::UniformFusion;
  if (name == "selective") return MergeCase::SelectiveMerge;
  throw ArgumentError("unknown merge case: " + name);
}

const char* merge_case_name(MergeCase c) {
  switch (c) {
    case MergeCase::RandomSelection: return "random";
    case MergeCase::UniformFusion: return "uniform";
    case MergeCase::SelectiveMerge: return "selective";
  }
  return "?";
}

MergePolicy MergePolicy::make(MergeCase c, double p, std::array<double, 3> lambdas) {
  if (p < 0.0 || p > 1.0) throw ArgumentError("merge policy: anchor fraction p must be in [0, 1]");
  double total = 0.0;
  for (double l : lambdas) {
    if (l < 0.0) throw ArgumentError("merge policy: fusion weights must be non-negative");
    total += l;
  }
  if (total <= 0.0) throw ArgumentError("merge policy: fusion weights must not all be zero");
  MergePolicy mp;
  mp.merge_case = c;
  mp.p = p;
  for (std::size_t i = 0; i < 3; ++i) mp.lambdas[i] = lambdas[i] / total;
  return mp;
}

bool AnchorSet::contains(std::size_t k) const {
  return std::find(indices.begin(), indices.end(), k) != indices.end();
}

AnchorSet select_anchors(const Tensor& x_high, const Tensor& x_low, double p) {
  check_same_shape("select_anchors", x_high, x_low);
  if (p < 0.0 || p > 1.0) throw ArgumentError("select_anchors: p must be in [0, 1]");
  const Tensor sims = cosine_sim_rows(x_high, x_low);
  const std::size_t t = sims.numel();
  std::vector<std::size_t> order(t);
  for (std::size_t i = 0; i < t; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  const std::size_t k = static_cast<std::size_t>(std::lround(p * static_cast<double>(t)));
  AnchorSet phi;
  phi.indices.assign(order.begin(), order.begin() + std::min(k, t));
  std::sort(phi.indices.begin(), phi.indices.end());
  return phi;
}

Tensor merge(const Tensor& x_low, const Tensor& x_mid, const Tensor& x_high, const AnchorSet& phi,
             const MergePolicy& policy, Rng& rng) {
  check_same_shape("merge", x_low, x_mid);
  check_same_shape("merge", x_low, x_high);
  check_2d("merge", x_low);
  const std::size_t t = x_low.rows(), d = x_low.cols();
  for (std::size_t k : phi.indices) {
    if (k >= t) throw ArgumentError("merge: anchor index " + std::to_string(k) + " out of range");
  }

  Tensor out({t, d});
  switch (policy.merge_case) {
    case MergeCase::RandomSelection: {
      const Tensor* maps[3] = {&x_high, &x_mid, &x_low};
      for (std::size_t k = 0; k < t; ++k) {
        const Tensor& src = *maps[rng.below(3)];
        for (std::size_t j = 0; j < d; ++j) out.at(k, j) = src.at(k, j);
      }
      break;
    }
    case MergeCase::UniformFusion: {
      for (std::size_t k = 0; k < t; ++k)
        for (std::size_t j = 0; j < d; ++j)
          out.at(k, j) = static_cast<float>(
              (static_cast<double>(x_high.at(k, j)) + x_mid.at(k, j) + x_low.at(k, j)) / 3.0);
      break;
    }
    case MergeCase::SelectiveMerge: {
      const auto [l1, l2, l3] = policy.lambdas;
      // A weight of exactly 1 degenerates to a copy; keep it bit-exact.
      const Tensor* sole = l1 == 1.0 ? &x_high : (l2 == 1.0 ? &x_mid : (l3 == 1.0 ? &x_low : nullptr));
      std::vector<bool> anchored(t, false);
      for (std::size_t k : phi.indices) anchored[k] = true;
      for (std::size_t k = 0; k < t; ++k) {
        if (anchored[k]) {
          for (std::size_t j = 0; j < d; ++j) out.at(k, j) = x_high.at(k, j);
        } else if (sole != nullptr) {
          for (std::size_t j = 0; j < d; ++j) out.at(k, j) = sole->at(k, j);
        } else {
          for (std::size_t j = 0; j < d; ++j)
            out.at(k, j) = static_cast<float>(l1 * x_high.at(k, j) + l2 * x_mid.at(k, j) +
                                              l3 * x_low.at(k, j));
        }
      }
      break;
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> token_divergence_report(const Tensor& x_fp,
                                                                    const Tensor& x_q) {
  check_same_shape("token_divergence_report", x_fp, x_q);
  check_2d("token_divergence_report", x_fp);
  const std::size_t t = x_fp.rows(), d = x_fp.cols();
  std::vector<std::pair<std::size_t, double>> report;
  report.reserve(t);
  std::vector<float> fp_row(d), q_row(d);
  for (std::size_t k = 0; k < t; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      fp_row[j] = x_fp.at(k, j);
      q_row[j] = x_q.at(k, j);
    }
    report.emplace_back(k, ks_statistic(fp_row, q_row));
  }
  std::stable_sort(report.begin(), report.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return report;
}

}  // namespace quept
