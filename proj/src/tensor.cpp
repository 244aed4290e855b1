// SPDX-License-Identifier: Apache-2.0
#include "quept/tensor.hpp"

#include <cmath>
#include <sstream>

#include "quept/errors.hpp"

namespace quept {

namespace {
std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
    n *= d;
  }
  return shape.empty() ? 0 : n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
  }
}

Tensor Tensor::scalar(float v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, float v) {
  Tensor t(std::move(shape));
  for (float& x : t.data_) x = v;
  return t;
}

Tensor Tensor::normal(std::vector<std::size_t> shape, Rng& rng, float stddev) {
  Tensor t(std::move(shape));
  for (float& x : t.data_) x = stddev * static_cast<float>(rng.normal());
  return t;
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, Rng& rng, float lo, float hi) {
  Tensor t(std::move(shape));
  for (float& x : t.data_) x = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

std::size_t Tensor::rows() const {
  check_2d("rows", *this);
  return shape_[0];
}

std::size_t Tensor::cols() const {
  check_2d("cols", *this);
  return shape_[1];
}

float& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
float Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() requires a single-element tensor, got " + shape_str());
  return data_[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

void check_2d(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + a.shape_str());
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = static_cast<float>(a[i] * c);
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d("matmul", a);
  check_2d("matmul", b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_str() + " vs " + b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(a.at(i, p)) * b.at(p, j);
      out.at(i, j) = static_cast<float>(acc);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check_2d("transpose", a);
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

float round_half_even(float x) { return std::nearbyintf(x); }

Tensor round_half_even(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = round_half_even(a[i]);
  return out;
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double v = a[i];
    if (v < lo) v = lo;
    if (v > hi) v = hi;
    out[i] = static_cast<float>(v);
  }
  return out;
}

Tensor abs(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = std::fabs(a[i]);
  return out;
}

float sum(const Tensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i];
  return static_cast<float>(acc);
}

float mean(const Tensor& a) {
  if (a.empty()) throw ArgumentError("mean: empty tensor");
  return static_cast<float>(static_cast<double>(sum(a)) / static_cast<double>(a.numel()));
}

float max_value(const Tensor& a) {
  if (a.empty()) throw ArgumentError("max_value: empty tensor");
  float best = a[0];
  for (std::size_t i = 1; i < a.numel(); ++i)
    if (a[i] > best) best = a[i];
  return best;
}

float min_value(const Tensor& a) {
  if (a.empty()) throw ArgumentError("min_value: empty tensor");
  float best = a[0];
  for (std::size_t i = 1; i < a.numel(); ++i)
    if (a[i] < best) best = a[i];
  return best;
}

float mae(const Tensor& a, const Tensor& b) {
  check_same_shape("mae", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += std::fabs(static_cast<double>(a[i]) - b[i]);
  return static_cast<float>(acc / static_cast<double>(a.numel()));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape("max_abs_diff", a, b);
  double best = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = std::fabs(static_cast<double>(a[i]) - b[i]);
    if (d > best) best = d;
  }
  return static_cast<float>(best);
}

}  // namespace quept
