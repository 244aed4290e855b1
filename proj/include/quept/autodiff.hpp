// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "quept/tensor.hpp"

namespace quept {

namespace detail {
struct VarState {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
};
}  // namespace detail

/// A tensor paired with gradient storage. Variables are handles: copies
/// share the same state, which is what lets an optimizer update the
/// parameter a recorded graph refers to. Ops on Variables record onto
/// the active Tape when one is bound; with no tape bound they are plain
/// (and cheaper) forward computations.
class Variable {
 public:
  Variable() = default;
  explicit Variable(Tensor value, bool requires_grad = false);
  static Variable scalar(float v, bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  const Tensor& value() const { return s_->value; }
  const Tensor& grad() const { return s_->grad; }
  // Handles share state, so mutating through a const handle is allowed
  // (same idiom as shared_ptr).
  Tensor& mutable_value() const { return s_->value; }
  Tensor& mutable_grad() const { return s_->grad; }
  bool requires_grad() const { return s_->requires_grad; }

  /// Sets every gradient entry to exactly 0.
  void zero_grad();

  const std::shared_ptr<detail::VarState>& state() const { return s_; }

 private:
  std::shared_ptr<detail::VarState> s_;
};

/// Execution-ordered op record (a Wengert list). The reverse pass walks
/// the list backwards, so recording order is the topological order.
/// A tape plus the variables recorded on it form one calibration
/// context; use a context from one thread at a time.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Binds the tape as the current thread's recording target.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active();

  void record(std::shared_ptr<detail::VarState> out, std::function<void()> backprop);

  /// Reverse pass from a scalar loss produced by ops recorded here.
  /// Grads of intermediates are zeroed first; grads of leaves (states
  /// never produced by a recorded op) accumulate across calls.
  void backward(const Variable& loss);

  void clear();
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<detail::VarState> out;
    std::function<void()> backprop;
  };
  std::vector<Entry> entries_;
};

/// While alive, round_ste computes identity in the forward pass too
/// (the backward is identity either way). Used by finite-difference
/// gradient checks, which need a continuous surrogate forward.
class RoundPassthroughGuard {
 public:
  RoundPassthroughGuard();
  ~RoundPassthroughGuard();

 private:
  bool prev_;
};

bool round_passthrough_active();

// ---- differentiable ops -------------------------------------------------
// Elementwise ops require equal shapes. The *_scalarv forms broadcast a
// single-element Variable over a tensor (both operands receive grads).

Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double c);
Variable div_scalar(const Variable& a, double c);
Variable add_rowvec(const Variable& a, const Tensor& row);

Variable add_scalarv(const Variable& a, const Variable& s);
Variable sub_scalarv(const Variable& a, const Variable& s);
Variable mul_scalarv(const Variable& a, const Variable& s);
Variable div_scalarv(const Variable& a, const Variable& s);

Variable matmul(const Variable& a, const Variable& b);
Variable transpose(const Variable& a);
Variable slice_rows(const Variable& a, std::size_t r0, std::size_t n);
Variable slice_cols(const Variable& a, std::size_t c0, std::size_t n);
Variable concat_rows(const std::vector<Variable>& parts);
Variable concat_cols(const std::vector<Variable>& parts);

/// Round half to even; backward passes the gradient through unchanged.
Variable round_ste(const Variable& x);

/// min(max(x, lo), hi); backward gradient is 1 where lo <= x <= hi and
/// 0 outside. `hi` may be +infinity for a one-sided floor.
Variable clip_ste(const Variable& x, double lo, double hi);

Variable sum(const Variable& a);
Variable max_all(const Variable& a);
Variable min_all(const Variable& a);

/// Mean absolute error; subgradient at equal entries is 0.
Variable mae(const Variable& a, const Variable& b);
Variable mse(const Variable& a, const Variable& b);

Variable softmax_rows(const Variable& a);
Variable layernorm_rows(const Variable& a, double eps = 1e-5);
Variable gelu(const Variable& a);

}  // namespace quept
