// SPDX-License-Identifier: Apache-2.0
#include "quept/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "quept/errors.hpp"

namespace quept {

namespace {
constexpr double kProbFloor = 1e-10;
}  // namespace

double kl_softmax_rows(const Tensor& z_fp, const Tensor& z_q) {
  check_same_shape("kl_softmax_rows", z_fp, z_q);
  const std::size_t rows = z_fp.rows(), cols = z_fp.cols();
  std::vector<double> p(cols), q(cols);
  auto softmax_into = [cols](const Tensor& z, std::size_t row, std::vector<double>& out) {
    double mx = z.at(row, 0);
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(z.at(row, j)));
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = std::exp(static_cast<double>(z.at(row, j)) - mx);
      denom += out[j];
    }
    for (std::size_t j = 0; j < cols; ++j) out[j] /= denom;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    softmax_into(z_fp, i, p);
    softmax_into(z_q, i, q);
    double kl = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      kl += p[j] * (std::log(std::max(p[j], kProbFloor)) - std::log(std::max(q[j], kProbFloor)));
    }
    total += std::max(kl, 0.0);  // absorbs the <=1e-8 float slack of the clamp
  }
  return total / static_cast<double>(rows);
}

namespace {

Tensor forward_one_layer_quant(const CalibratedModel& cm, const Tensor& x, std::size_t n_seq,
                               std::size_t target_layer, int bit) {
  Tensor cur = x;
  for (std::size_t l = 0; l < cm.model.blocks.size(); ++l) {
    const LinearFn fn = [&, l](std::size_t k, const Tensor& w, const Tensor& bias,
                               const Variable& in) {
      if (l * kLayersPerBlock + k == target_layer) {
        const LayerQuantState& ls = cm.qstate[l][k];
        const Variable r = ls.adapter.compensation(cm.tiers.tier_of(bit));
        const Variable w_hat = fake_quant_weight(Variable(w), r, ls.clips.at(bit), BitWidth(bit));
        return add_rowvec(matmul(in, transpose(w_hat)), bias);
      }
      return add_rowvec(matmul(in, transpose(Variable(w))), bias);
    };
    cur = block_forward(cm.model.blocks[l], Variable(cur), n_seq, cm.model.cfg.tokens,
                        cm.model.cfg.heads, fn)
              .value();
  }
  return cur;
}

}  // namespace

double layer_sensitivity(const CalibratedModel& cm, const CalibSet& calib, std::size_t layer,
                         int bit) {
  if (calib.n == 0) throw ArgumentError("layer_sensitivity: empty calibration set");
  if (layer >= cm.model.layer_count()) throw ArgumentError("layer_sensitivity: layer out of range");
  if (!cm.supports(bit)) {
    throw UnsupportedBitError("layer_sensitivity: bit " + std::to_string(bit) +
                              " not in calibrated set");
  }
  const Tensor z_fp = forward_fp_all(cm.model, calib.flat, calib.n).back();
  const Tensor z_q = forward_one_layer_quant(cm, calib.flat, calib.n, layer, bit);
  return kl_softmax_rows(z_fp, z_q);
}

std::vector<double> measure_sensitivity(const CalibratedModel& cm, const CalibSet& calib, int bit) {
  if (calib.n == 0) throw ArgumentError("measure_sensitivity: empty calibration set");
  std::vector<double> column;
  column.reserve(cm.model.layer_count());
  for (std::size_t layer = 0; layer < cm.model.layer_count(); ++layer) {
    column.push_back(layer_sensitivity(cm, calib, layer, bit));
  }
  return column;
}

SensitivityTable build_sensitivity_table(const CalibratedModel& cm, const CalibSet& calib) {
  SensitivityTable table;
  table.bits = cm.bits();
  table.layer_count = cm.model.layer_count();
  table.kl.assign(table.layer_count * table.bits.size(), 0.0);
  for (std::size_t bi = 0; bi < table.bits.size(); ++bi) {
    const std::vector<double> col = measure_sensitivity(cm, calib, table.bits[bi]);
    for (std::size_t l = 0; l < table.layer_count; ++l) table.at(l, bi) = col[l];
  }
  return table;
}

void SensitivityTable::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ArgumentError("cannot open for writing: " + path);
  f << "layer,bit,kl\n";
  for (std::size_t l = 0; l < layer_count; ++l) {
    for (std::size_t bi = 0; bi < bits.size(); ++bi) {
      f << l << ',' << bits[bi] << ',' << format_float(at(l, bi)) << '\n';
    }
  }
}

SensitivityTable SensitivityTable::read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ArgumentError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "layer,bit,kl") {
    throw LoadError("sensitivity csv: bad header in " + path);
  }
  struct Row {
    std::size_t layer;
    int bit;
    double kl;
  };
  std::vector<Row> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw LoadError("sensitivity csv: bad row '" + line + "'");
    }
    rows.push_back(Row{std::stoul(a), std::stoi(b), parse_float(c)});
  }
  if (rows.empty()) throw LoadError("sensitivity csv: no data rows");
  SensitivityTable table;
  for (const Row& r : rows) {
    if (r.layer == 0 && std::find(table.bits.begin(), table.bits.end(), r.bit) == table.bits.end()) {
      table.bits.push_back(r.bit);
    }
    table.layer_count = std::max(table.layer_count, r.layer + 1);
  }
  std::sort(table.bits.begin(), table.bits.end());
  table.kl.assign(table.layer_count * table.bits.size(),
                  std::numeric_limits<double>::quiet_NaN());
  for (const Row& r : rows) {
    const auto it = std::find(table.bits.begin(), table.bits.end(), r.bit);
    if (it == table.bits.end()) throw LoadError("sensitivity csv: ragged bit set");
    table.at(r.layer, static_cast<std::size_t>(it - table.bits.begin())) = r.kl;
  }
  for (double v : table.kl) {
    if (std::isnan(v)) throw LoadError("sensitivity csv: missing (layer, bit) entries");
  }
  return table;
}

namespace {

long long budget_total_bits(const SensitivityTable& table, const Budget& budget) {
  if (budget.layer_count != table.layer_count) {
    throw ArgumentError("allocation: budget layer count does not match table");
  }
  if (table.bits.empty() || table.layer_count == 0) {
    throw ArgumentError("allocation: empty sensitivity table");
  }
  return static_cast<long long>(
      std::floor(budget.target_avg * static_cast<double>(budget.layer_count) + 1e-9));
}

Allocation finish_allocation(const SensitivityTable& table, std::vector<int> bits_per_layer) {
  Allocation out;
  out.bits_per_layer = std::move(bits_per_layer);
  double total_bits = 0.0, total_kl = 0.0;
  for (std::size_t l = 0; l < out.bits_per_layer.size(); ++l) {
    total_bits += out.bits_per_layer[l];
    const auto it = std::find(table.bits.begin(), table.bits.end(), out.bits_per_layer[l]);
    total_kl += table.at(l, static_cast<std::size_t>(it - table.bits.begin()));
  }
  out.achieved_avg = total_bits / static_cast<double>(out.bits_per_layer.size());
  out.total_sensitivity = total_kl;
  return out;
}

}  // namespace

Allocation allocate_dp(const SensitivityTable& table, const Budget& budget) {
  const long long total = budget_total_bits(table, budget);
  const std::size_t layers = table.layer_count;
  const std::vector<int>& bits = table.bits;
  const long long min_bit = bits.front();
  if (total < min_bit * static_cast<long long>(layers)) {
    throw InfeasibleBudgetError("allocation: budget of " + std::to_string(total) +
                                " total bits cannot cover " + std::to_string(layers) +
                                " layers at minimum bit " + std::to_string(min_bit));
  }
  const std::size_t width = static_cast<std::size_t>(total) + 1;
  const double inf = std::numeric_limits<double>::infinity();

  // f[l][r]: minimal sensitivity of layers l..end given r remaining bits.
  std::vector<std::vector<double>> f(layers + 1, std::vector<double>(width, inf));
  for (std::size_t r = 0; r < width; ++r) f[layers][r] = 0.0;
  for (std::size_t l = layers; l-- > 0;) {
    const long long reserve = min_bit * static_cast<long long>(layers - l - 1);
    for (std::size_t r = 0; r < width; ++r) {
      for (std::size_t bi = 0; bi < bits.size(); ++bi) {
        const long long b = bits[bi];
        if (b + reserve > static_cast<long long>(r)) continue;
        const double cand = table.at(l, bi) + f[l + 1][r - static_cast<std::size_t>(b)];
        if (cand < f[l][r]) f[l][r] = cand;
      }
    }
  }

  std::vector<int> chosen(layers, 0);
  std::size_t remaining = static_cast<std::size_t>(total);
  for (std::size_t l = 0; l < layers; ++l) {
    const long long reserve = min_bit * static_cast<long long>(layers - l - 1);
    double best = inf;
    int best_bit = -1;
    for (std::size_t bi = bits.size(); bi-- > 0;) {  // high bits first: tie-break
      const long long b = bits[bi];
      if (b + reserve > static_cast<long long>(remaining)) continue;
      const double cand = table.at(l, bi) + f[l + 1][remaining - static_cast<std::size_t>(b)];
      if (cand < best) {
        best = cand;
        best_bit = bits[bi];
      }
    }
    chosen[l] = best_bit;
    remaining -= static_cast<std::size_t>(best_bit);
  }
  return finish_allocation(table, std::move(chosen));
}

Allocation allocate_bruteforce(const SensitivityTable& table, const Budget& budget) {
  const long long total = budget_total_bits(table, budget);
  const std::size_t layers = table.layer_count;
  const std::vector<int>& bits = table.bits;
  double combos = 1.0;
  for (std::size_t l = 0; l < layers; ++l) combos *= static_cast<double>(bits.size());
  if (combos > 1e7) {
    throw InstanceTooLargeError("allocate_bruteforce: " + format_float(combos) +
                                " assignments exceed the 1e7 enumeration bound");
  }
  if (total < static_cast<long long>(bits.front()) * static_cast<long long>(layers)) {
    throw InfeasibleBudgetError("allocation: budget of " + std::to_string(total) +
                                " total bits cannot cover " + std::to_string(layers) +
                                " layers at minimum bit " + std::to_string(bits.front()));
  }

  std::vector<std::size_t> idx(layers, 0);
  std::vector<int> best;
  double best_obj = std::numeric_limits<double>::infinity();
  bool done = false;
  while (!done) {
    long long bit_sum = 0;
    for (std::size_t l = 0; l < layers; ++l) bit_sum += bits[idx[l]];
    if (bit_sum <= total) {
      double obj = 0.0;
      for (std::size_t l = 0; l < layers; ++l) obj += table.at(l, idx[l]);
      std::vector<int> assignment(layers);
      for (std::size_t l = 0; l < layers; ++l) assignment[l] = bits[idx[l]];
      const bool better =
          obj < best_obj ||
          (obj == best_obj && std::lexicographical_compare(best.begin(), best.end(),
                                                           assignment.begin(), assignment.end()));
      if (better) {
        best_obj = obj;
        best = std::move(assignment);
      }
    }
    // odometer increment, most significant digit first exhausts last
    done = true;
    for (std::size_t pos = layers; pos-- > 0;) {
      if (++idx[pos] < bits.size()) {
        done = false;
        break;
      }
      idx[pos] = 0;
    }
  }
  return finish_allocation(table, std::move(best));
}

}  // namespace quept
