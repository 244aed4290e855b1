// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "quept/rng.hpp"

namespace quept {

/// Dense row-major float32 array. A scalar is shape {1}; every dimension
/// is positive and data length always equals the product of the shape.
/// Tensors are value types and are not mutated by public ops.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor scalar(float v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, float v);
  static Tensor normal(std::vector<std::size_t> shape, Rng& rng, float stddev = 1.0f);
  static Tensor uniform(std::vector<std::size_t> shape, Rng& rng, float lo, float hi);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rank() const { return shape_.size(); }

  /// 2-D accessors; the tensor must have rank 2.
  std::size_t rows() const;
  std::size_t cols() const;
  float& at(std::size_t r, std::size_t c);
  float at(std::size_t r, std::size_t c) const;

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Value of a single-element tensor.
  float item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

void check_same_shape(const char* op, const Tensor& a, const Tensor& b);
void check_2d(const char* op, const Tensor& a);

// Elementwise and matrix ops. Mismatched shapes raise DimensionError
// naming both shapes. Reductions accumulate in double.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor round_half_even(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor abs(const Tensor& a);

float sum(const Tensor& a);
float mean(const Tensor& a);
float max_value(const Tensor& a);
float min_value(const Tensor& a);
float mae(const Tensor& a, const Tensor& b);
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Round half to even, the tie-break used by every quantizer here.
float round_half_even(float x);

}  // namespace quept
