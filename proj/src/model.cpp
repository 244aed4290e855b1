// SPDX-License-Identifier: Apache-2.0
#include "quept/model.hpp"

#include <cmath>

#include "quept/errors.hpp"

namespace quept {

const Tensor& BlockWeights::weight(std::size_t layer) const {
  switch (layer) {
    case 0: return w_qkv;
    case 1: return w_out;
    case 2: return w_up;
    case 3: return w_down;
  }
  throw ArgumentError("BlockWeights: layer index out of range");
}

Tensor& BlockWeights::weight(std::size_t layer) {
  return const_cast<Tensor&>(static_cast<const BlockWeights&>(*this).weight(layer));
}

const Tensor& BlockWeights::bias(std::size_t layer) const {
  switch (layer) {
    case 0: return b_qkv;
    case 1: return b_out;
    case 2: return b_up;
    case 3: return b_down;
  }
  throw ArgumentError("BlockWeights: layer index out of range");
}

Tensor& BlockWeights::bias(std::size_t layer) {
  return const_cast<Tensor&>(static_cast<const BlockWeights&>(*this).bias(layer));
}

namespace {
Tensor init_linear(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_dim));
  return Tensor::uniform({out_dim, in_dim}, rng, -bound, bound);
}

Tensor init_bias(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_dim));
  return Tensor::uniform({out_dim}, rng, -bound, bound);
}
}  // namespace

ToyModel ToyModel::random(const ModelConfig& cfg) {
  if (cfg.dim % cfg.heads != 0) throw ArgumentError("model: hidden dim must be divisible by heads");
  if (cfg.blocks == 0 || cfg.tokens == 0) throw ArgumentError("model: sizes must be positive");
  ToyModel m;
  m.cfg = cfg;
  Rng rng(cfg.seed);
  const std::size_t d = cfg.dim, h = cfg.mlp_ratio * cfg.dim;
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    BlockWeights bw;
    bw.w_qkv = init_linear(3 * d, d, rng);
    bw.b_qkv = init_bias(3 * d, d, rng);
    bw.w_out = init_linear(d, d, rng);
    bw.b_out = init_bias(d, d, rng);
    bw.w_up = init_linear(h, d, rng);
    bw.b_up = init_bias(h, d, rng);
    bw.w_down = init_linear(d, h, rng);
    bw.b_down = init_bias(d, h, rng);
    m.blocks.push_back(std::move(bw));
  }
  return m;
}

Tensor CalibSet::sequence(std::size_t i) const {
  if (i >= n) throw ArgumentError("CalibSet: sequence index out of range");
  Tensor out({t, d});
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t c = 0; c < d; ++c) out.at(r, c) = flat.at(i * t + r, c);
  return out;
}

CalibSet gen_calib(std::uint64_t seed, std::size_t n, std::size_t t, std::size_t d) {
  if (n == 0 || t == 0 || d == 0) throw ArgumentError("gen_calib: sizes must be positive");
  CalibSet cs;
  cs.n = n;
  cs.t = t;
  cs.d = d;
  cs.seed = seed;
  cs.flat = Tensor({n * t, d});
  Rng rng(seed);
  const std::size_t k = 4;  // rank of the structure term
  for (std::size_t s = 0; s < n; ++s) {
    Tensor u = Tensor::normal({t, k}, rng);
    Tensor v = Tensor::normal({d, k}, rng);
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        double structure = 0.0;
        for (std::size_t j = 0; j < k; ++j) structure += static_cast<double>(u.at(r, j)) * v.at(c, j);
        cs.flat.at(s * t + r, c) = static_cast<float>(rng.normal() + 0.25 * structure);
      }
    }
  }
  return cs;
}

Variable block_forward(const BlockWeights& bw, const Variable& x, std::size_t n_seq,
                       std::size_t tokens, std::size_t heads, const LinearFn& linear) {
  check_2d("block_forward", x.value());
  const std::size_t d = bw.w_qkv.cols();
  if (x.value().cols() != d || x.value().rows() != n_seq * tokens) {
    throw DimensionError("block_forward: input " + x.value().shape_str() + " does not match " +
                         std::to_string(n_seq * tokens) + "x" + std::to_string(d));
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  const Variable qkv = linear(0, bw.w_qkv, bw.b_qkv, layernorm_rows(x));
  std::vector<Variable> seq_outs;
  seq_outs.reserve(n_seq);
  for (std::size_t s = 0; s < n_seq; ++s) {
    const Variable rows = slice_rows(qkv, s * tokens, tokens);
    std::vector<Variable> head_outs;
    head_outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Variable q = slice_cols(rows, h * dh, dh);
      const Variable k = slice_cols(rows, d + h * dh, dh);
      const Variable v = slice_cols(rows, 2 * d + h * dh, dh);
      const Variable attn = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dh));
      head_outs.push_back(matmul(attn, v));
    }
    seq_outs.push_back(concat_cols(head_outs));
  }
  const Variable attn_out = linear(1, bw.w_out, bw.b_out, concat_rows(seq_outs));
  const Variable a = add(x, attn_out);

  const Variable up = gelu(linear(2, bw.w_up, bw.b_up, layernorm_rows(a)));
  const Variable down = linear(3, bw.w_down, bw.b_down, up);
  return add(a, down);
}

namespace {
Variable plain_linear(const Tensor& w, const Tensor& bias, const Variable& x) {
  return add_rowvec(matmul(x, transpose(Variable(w))), bias);
}
}  // namespace

Tensor forward_fp(const BlockWeights& bw, const Tensor& x, std::size_t n_seq, std::size_t tokens,
                  std::size_t heads) {
  const LinearFn fp = [](std::size_t, const Tensor& w, const Tensor& bias, const Variable& in) {
    return plain_linear(w, bias, in);
  };
  return block_forward(bw, Variable(x), n_seq, tokens, heads, fp).value();
}

Variable forward_quant(const BlockWeights& bw, const Variable& x, std::size_t n_seq,
                       std::size_t tokens, std::size_t heads, const QuantSpec& spec) {
  if (spec.state == nullptr) throw ArgumentError("forward_quant: missing quantization state");
  const BitWidth wb(spec.weight_bits);
  const LinearFn quant_linear = [&, wb](std::size_t layer, const Tensor& w, const Tensor& bias,
                                        const Variable& in) {
    const LayerQuantState& ls = (*spec.state)[layer];
    Variable xin = in;
    if (spec.act_bits.has_value()) {
      const auto it = ls.act_scales.find(*spec.act_bits);
      if (it == ls.act_scales.end()) {
        throw UnsupportedBitError("forward_quant: no activation scale for bit " +
                                  std::to_string(*spec.act_bits) + " at layer " +
                                  kLayerNames[layer]);
      }
      xin = fake_quant_act(in, it->second, BitWidth(*spec.act_bits));
    }
    if (!spec.weight_quant) {
      return add_rowvec(matmul(xin, transpose(Variable(w))), bias);
    }
    Variable r;
    if (spec.with_adapter) {
      r = ls.adapter.compensation(spec.tier);
    } else {
      r = Variable(Tensor::zeros(w.shape()));
    }
    ClipPair clips;
    if (spec.neutral_clips) {
      clips = ClipPair{Variable::scalar(1.0f), Variable::scalar(1.0f)};
    } else {
      const auto it = ls.clips.find(spec.weight_bits);
      if (it == ls.clips.end()) {
        throw UnsupportedBitError("forward_quant: no clip pair for bit " +
                                  std::to_string(spec.weight_bits) + " at layer " +
                                  kLayerNames[layer]);
      }
      clips = it->second;
    }
    const Variable w_hat = fake_quant_weight(Variable(w), r, clips, wb);
    return add_rowvec(matmul(xin, transpose(w_hat)), bias);
  };
  return block_forward(bw, x, n_seq, tokens, heads, quant_linear);
}

std::vector<Tensor> forward_fp_all(const ToyModel& m, const Tensor& x, std::size_t n_seq) {
  std::vector<Tensor> outs;
  outs.reserve(m.blocks.size());
  Tensor cur = x;
  for (const BlockWeights& bw : m.blocks) {
    cur = forward_fp(bw, cur, n_seq, m.cfg.tokens, m.cfg.heads);
    outs.push_back(cur);
  }
  return outs;
}

std::array<Tensor, kLayersPerBlock> collect_linear_inputs(const BlockWeights& bw, const Tensor& x,
                                                          std::size_t n_seq, std::size_t tokens,
                                                          std::size_t heads) {
  std::array<Tensor, kLayersPerBlock> inputs;
  const LinearFn observer = [&inputs](std::size_t layer, const Tensor& w, const Tensor& bias,
                                      const Variable& in) {
    inputs[layer] = in.value();
    return plain_linear(w, bias, in);
  };
  block_forward(bw, Variable(x), n_seq, tokens, heads, observer);
  return inputs;
}

}  // namespace quept
