// SPDX-License-Identifier: Apache-2.0
#include "quept/autodiff.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "quept/errors.hpp"

namespace quept {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_round_passthrough = false;

using State = std::shared_ptr<detail::VarState>;

void record(State out, std::function<void()> backprop) {
  if (Tape* t = Tape::active()) t->record(std::move(out), std::move(backprop));
}

void check_scalar(const char* op, const Variable& s) {
  if (s.value().numel() != 1) {
    throw DimensionError(std::string(op) + ": expected scalar variable, got " + s.value().shape_str());
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Variable::Variable(Tensor value, bool requires_grad) : s_(std::make_shared<detail::VarState>()) {
  s_->grad = Tensor::zeros(value.shape());
  s_->value = std::move(value);
  s_->requires_grad = requires_grad;
}

Variable Variable::scalar(float v, bool requires_grad) {
  return Variable(Tensor::scalar(v), requires_grad);
}

void Variable::zero_grad() {
  for (float& g : s_->grad.vec()) g = 0.0f;
}

Tape::~Tape() = default;

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<detail::VarState> out, std::function<void()> backprop) {
  entries_.push_back(Entry{std::move(out), std::move(backprop)});
}

void Tape::backward(const Variable& loss) {
  if (!loss.defined() || loss.value().numel() != 1) {
    throw ArgumentError("backward: loss must be a scalar variable");
  }
  bool found = false;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->out == loss.state()) {
      found = true;
      break;
    }
  }
  if (!found) throw ArgumentError("backward: loss was not produced by ops recorded on this tape");

  // Intermediates restart from zero each pass; leaves keep accumulating.
  for (Entry& e : entries_) {
    for (float& g : e.out->grad.vec()) g = 0.0f;
  }
  loss.state()->grad[0] = 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backprop();
}

void Tape::clear() { entries_.clear(); }

RoundPassthroughGuard::RoundPassthroughGuard() : prev_(g_round_passthrough) {
  g_round_passthrough = true;
}
RoundPassthroughGuard::~RoundPassthroughGuard() { g_round_passthrough = prev_; }

bool round_passthrough_active() { return g_round_passthrough; }

// ---- elementwise --------------------------------------------------------

Variable add(const Variable& a, const Variable& b) {
  Variable out(add(a.value(), b.value()));
  State sa = a.state(), sb = b.state(), so = out.state();
  record(so, [sa, sb, so] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += so->grad[i];
      sb->grad[i] += so->grad[i];
    }
  });
  return out;
}

Variable sub(const Variable& a, const Variable& b) {
  Variable out(sub(a.value(), b.value()));
  State sa = a.state(), sb = b.state(), so = out.state();
  record(so, [sa, sb, so] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += so->grad[i];
      sb->grad[i] -= so->grad[i];
    }
  });
  return out;
}

Variable mul(const Variable& a, const Variable& b) {
  Variable out(mul(a.value(), b.value()));
  State sa = a.state(), sb = b.state(), so = out.state();
  record(so, [sa, sb, so] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += so->grad[i] * sb->value[i];
      sb->grad[i] += so->grad[i] * sa->value[i];
    }
  });
  return out;
}

Variable scale(const Variable& a, double c) {
  Variable out(scale(a.value(), c));
  State sa = a.state(), so = out.state();
  record(so, [sa, so, c] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += static_cast<float>(so->grad[i] * c);
    }
  });
  return out;
}

Variable div_scalar(const Variable& a, double c) {
  if (c == 0.0) throw ArgumentError("div_scalar: division by zero");
  Tensor v(a.value().shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = static_cast<float>(a.value()[i] / c);
  Variable out(std::move(v));
  State sa = a.state(), so = out.state();
  record(so, [sa, so, c] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += static_cast<float>(so->grad[i] / c);
    }
  });
  return out;
}

Variable add_rowvec(const Variable& a, const Tensor& row) {
  check_2d("add_rowvec", a.value());
  if (row.numel() != a.value().cols()) {
    throw DimensionError("add_rowvec: row length " + row.shape_str() + " vs " + a.value().shape_str());
  }
  const std::size_t r = a.value().rows(), c = a.value().cols();
  Tensor v(a.value().shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v.at(i, j) = a.value().at(i, j) + row[j];
  Variable out(std::move(v));
  State sa = a.state(), so = out.state();
  record(so, [sa, so] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) sa->grad[i] += so->grad[i];
  });
  return out;
}

// ---- scalar-variable broadcasts ------------------------------------------

Variable add_scalarv(const Variable& a, const Variable& s) {
  check_scalar("add_scalarv", s);
  const float sv = s.value()[0];
  Tensor v(a.value().shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] + sv;
  Variable out(std::move(v));
  State sa = a.state(), ss = s.state(), so = out.state();
  record(so, [sa, ss, so] {
    double acc = 0.0;
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += so->grad[i];
      acc += so->grad[i];
    }
    ss->grad[0] += static_cast<float>(acc);
  });
  return out;
}

Variable sub_scalarv(const Variable& a, const Variable& s) {
  check_scalar("sub_scalarv", s);
  const float sv = s.value()[0];
  Tensor v(a.value().shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] - sv;
  Variable out(std::move(v));
  State sa = a.state(), ss = s.state(), so = out.state();
  record(so, [sa, ss, so] {
    double acc = 0.0;
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += so->grad[i];
      acc += so->grad[i];
    }
    ss->grad[0] -= static_cast<float>(acc);
  });
  return out;
}

Variable mul_scalarv(const Variable& a, const Variable& s) {
  check_scalar("mul_scalarv", s);
  const float sv = s.value()[0];
  Tensor v(a.value().shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] * sv;
  Variable out(std::move(v));
  State sa = a.state(), ss = s.state(), so = out.state();
  record(so, [sa, ss, so] {
    const float sv_now = ss->value[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += so->grad[i] * sv_now;
      acc += static_cast<double>(so->grad[i]) * sa->value[i];
    }
    ss->grad[0] += static_cast<float>(acc);
  });
  return out;
}

Variable div_scalarv(const Variable& a, const Variable& s) {
  check_scalar("div_scalarv", s);
  const float sv = s.value()[0];
  if (sv == 0.0f) throw ArgumentError("div_scalarv: division by zero-valued scalar");
  Tensor v(a.value().shape());
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] / sv;
  Variable out(std::move(v));
  State sa = a.state(), ss = s.state(), so = out.state();
  record(so, [sa, ss, so] {
    const double sv_now = ss->value[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      sa->grad[i] += static_cast<float>(so->grad[i] / sv_now);
      acc += static_cast<double>(so->grad[i]) * (-static_cast<double>(sa->value[i]) / (sv_now * sv_now));
    }
    ss->grad[0] += static_cast<float>(acc);
  });
  return out;
}

// ---- linear algebra -------------------------------------------------------

Variable matmul(const Variable& a, const Variable& b) {
  Variable out(matmul(a.value(), b.value()));
  State sa = a.state(), sb = b.state(), so = out.state();
  record(so, [sa, sb, so] {
    const Tensor& g = so->grad;
    const Tensor& av = sa->value;
    const Tensor& bv = sb->value;
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    // dA = G * B^T, dB = A^T * G
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(g.at(i, j)) * bv.at(p, j);
        sa->grad.at(i, p) += static_cast<float>(acc);
      }
    }
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += static_cast<double>(av.at(i, p)) * g.at(i, j);
        sb->grad.at(p, j) += static_cast<float>(acc);
      }
    }
  });
  return out;
}

Variable transpose(const Variable& a) {
  Variable out(transpose(a.value()));
  State sa = a.state(), so = out.state();
  record(so, [sa, so] {
    const std::size_t r = so->grad.rows(), c = so->grad.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) sa->grad.at(j, i) += so->grad.at(i, j);
  });
  return out;
}

Variable slice_rows(const Variable& a, std::size_t r0, std::size_t n) {
  check_2d("slice_rows", a.value());
  if (r0 + n > a.value().rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t c = a.value().cols();
  Tensor v({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) v.at(i, j) = a.value().at(r0 + i, j);
  Variable out(std::move(v));
  State sa = a.state(), so = out.state();
  record(so, [sa, so, r0, n, c] {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) sa->grad.at(r0 + i, j) += so->grad.at(i, j);
  });
  return out;
}

Variable slice_cols(const Variable& a, std::size_t c0, std::size_t n) {
  check_2d("slice_cols", a.value());
  if (c0 + n > a.value().cols()) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t r = a.value().rows();
  Tensor v({r, n});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) v.at(i, j) = a.value().at(i, c0 + j);
  Variable out(std::move(v));
  State sa = a.state(), so = out.state();
  record(so, [sa, so, c0, n, r] {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < n; ++j) sa->grad.at(i, c0 + j) += so->grad.at(i, j);
  });
  return out;
}

Variable concat_rows(const std::vector<Variable>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no parts");
  const std::size_t c = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Variable& p : parts) {
    check_2d("concat_rows", p.value());
    if (p.value().cols() != c) throw DimensionError("concat_rows: column counts differ");
    rows += p.value().rows();
  }
  Tensor v({rows, c});
  std::size_t r = 0;
  for (const Variable& p : parts) {
    for (std::size_t i = 0; i < p.value().rows(); ++i)
      for (std::size_t j = 0; j < c; ++j) v.at(r + i, j) = p.value().at(i, j);
    r += p.value().rows();
  }
  Variable out(std::move(v));
  std::vector<State> ins;
  ins.reserve(parts.size());
  for (const Variable& p : parts) ins.push_back(p.state());
  State so = out.state();
  record(so, [ins, so, c] {
    std::size_t r0 = 0;
    for (const State& s : ins) {
      for (std::size_t i = 0; i < s->grad.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j) s->grad.at(i, j) += so->grad.at(r0 + i, j);
      r0 += s->grad.rows();
    }
  });
  return out;
}

Variable concat_cols(const std::vector<Variable>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no parts");
  const std::size_t r = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Variable& p : parts) {
    check_2d("concat_cols", p.value());
    if (p.value().rows() != r) throw DimensionError("concat_cols: row counts differ");
    cols += p.value().cols();
  }
  Tensor v({r, cols});
  std::size_t c = 0;
  for (const Variable& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.value().cols(); ++j) v.at(i, c + j) = p.value().at(i, j);
    c += p.value().cols();
  }
  Variable out(std::move(v));
  std::vector<State> ins;
  ins.reserve(parts.size());
  for (const Variable& p : parts) ins.push_back(p.state());
  State so = out.state();
  record(so, [ins, so, r] {
    std::size_t c0 = 0;
    for (const State& s : ins) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < s->grad.cols(); ++j) s->grad.at(i, j) += so->grad.at(i, c0 + j);
      c0 += s->grad.cols();
    }
  });
  return out;
}

// ---- straight-through estimators ------------------------------------------

Variable round_ste(const Variable& x) {
  Tensor v = g_round_passthrough ? x.value() : round_half_even(x.value());
  Variable out(std::move(v));
  State sx = x.state(), so = out.state();
  record(so, [sx, so] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) sx->grad[i] += so->grad[i];
  });
  return out;
}

Variable clip_ste(const Variable& x, double lo, double hi) {
  if (lo > hi) throw ArgumentError("clip_ste: lower bound exceeds upper bound");
  Variable out(clamp(x.value(), lo, hi));
  State sx = x.state(), so = out.state();
  record(so, [sx, so, lo, hi] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      const double v = sx->value[i];
      if (v >= lo && v <= hi) sx->grad[i] += so->grad[i];
    }
  });
  return out;
}

// ---- reductions ------------------------------------------------------------

Variable sum(const Variable& a) {
  Variable out(Tensor::scalar(sum(a.value())));
  State sa = a.state(), so = out.state();
  record(so, [sa, so] {
    const float g = so->grad[0];
    for (std::size_t i = 0; i < sa->grad.numel(); ++i) sa->grad[i] += g;
  });
  return out;
}

namespace {
Variable extremum(const Variable& a, bool take_max) {
  if (a.value().empty()) throw ArgumentError("extremum over empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.value().numel(); ++i) {
    const bool better = take_max ? a.value()[i] > a.value()[best] : a.value()[i] < a.value()[best];
    if (better) best = i;
  }
  Variable out(Tensor::scalar(a.value()[best]));
  State sa = a.state(), so = out.state();
  record(so, [sa, so, best] { sa->grad[best] += so->grad[0]; });
  return out;
}
}  // namespace

Variable max_all(const Variable& a) { return extremum(a, true); }
Variable min_all(const Variable& a) { return extremum(a, false); }

Variable mae(const Variable& a, const Variable& b) {
  check_same_shape("mae", a.value(), b.value());
  Variable out(Tensor::scalar(mae(a.value(), b.value())));
  State sa = a.state(), sb = b.state(), so = out.state();
  record(so, [sa, sb, so] {
    const std::size_t n = sa->value.numel();
    const float g = so->grad[0] / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float d = sa->value[i] - sb->value[i];
      const float s = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
      sa->grad[i] += g * s;
      sb->grad[i] -= g * s;
    }
  });
  return out;
}

Variable mse(const Variable& a, const Variable& b) {
  check_same_shape("mse", a.value(), b.value());
  const std::size_t n = a.value().numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    acc += d * d;
  }
  Variable out(Tensor::scalar(static_cast<float>(acc / static_cast<double>(n))));
  State sa = a.state(), sb = b.state(), so = out.state();
  record(so, [sa, sb, so, n] {
    const float g = so->grad[0] * 2.0f / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float d = sa->value[i] - sb->value[i];
      sa->grad[i] += g * d;
      sb->grad[i] -= g * d;
    }
  });
  return out;
}

// ---- neural-net ops ---------------------------------------------------------

Variable softmax_rows(const Variable& a) {
  check_2d("softmax_rows", a.value());
  const std::size_t r = a.value().rows(), c = a.value().cols();
  Tensor v({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = a.value().at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(a.value().at(i, j)));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(static_cast<double>(a.value().at(i, j)) - mx);
      v.at(i, j) = static_cast<float>(e);
      denom += e;
    }
    for (std::size_t j = 0; j < c; ++j) v.at(i, j) = static_cast<float>(v.at(i, j) / denom);
  }
  Variable out(std::move(v));
  State sa = a.state(), so = out.state();
  record(so, [sa, so, r, c] {
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += static_cast<double>(so->grad.at(i, j)) * so->value.at(i, j);
      for (std::size_t j = 0; j < c; ++j) {
        sa->grad.at(i, j) += static_cast<float>((so->grad.at(i, j) - dot) * so->value.at(i, j));
      }
    }
  });
  return out;
}

Variable layernorm_rows(const Variable& a, double eps) {
  check_2d("layernorm_rows", a.value());
  const std::size_t r = a.value().rows(), c = a.value().cols();
  Tensor v({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += a.value().at(i, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = a.value().at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      v.at(i, j) = static_cast<float>((a.value().at(i, j) - mu) * inv);
    }
  }
  Variable out(std::move(v));
  State sa = a.state(), so = out.state();
  record(so, [sa, so, r, c, eps] {
    for (std::size_t i = 0; i < r; ++i) {
      double mu = 0.0;
      for (std::size_t j = 0; j < c; ++j) mu += sa->value.at(i, j);
      mu /= static_cast<double>(c);
      double var = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double d = sa->value.at(i, j) - mu;
        var += d * d;
      }
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + eps);
      double gmean = 0.0, gxmean = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double xh = (sa->value.at(i, j) - mu) * inv;
        gmean += so->grad.at(i, j);
        gxmean += static_cast<double>(so->grad.at(i, j)) * xh;
      }
      gmean /= static_cast<double>(c);
      gxmean /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) {
        const double xh = (sa->value.at(i, j) - mu) * inv;
        sa->grad.at(i, j) += static_cast<float>(inv * (so->grad.at(i, j) - gmean - xh * gxmean));
      }
    }
  });
  return out;
}

Variable gelu(const Variable& a) {
  Tensor v(a.value().shape());
  for (std::size_t i = 0; i < v.numel(); ++i) {
    const double x = a.value()[i];
    v[i] = static_cast<float>(x * 0.5 * (1.0 + std::erf(x * kInvSqrt2)));
  }
  Variable out(std::move(v));
  State sa = a.state(), so = out.state();
  record(so, [sa, so] {
    for (std::size_t i = 0; i < so->grad.numel(); ++i) {
      const double x = sa->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      sa->grad[i] += static_cast<float>(so->grad[i] * (cdf + x * pdf));
    }
  });
  return out;
}

}  // namespace quept
