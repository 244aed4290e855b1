// SPDX-License-Identifier: Apache-2.0
#include "quept/recon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "quept/errors.hpp"

namespace quept {

// ---- tier partition -------------------------------------------------------

TierPartition TierPartition::parse(const std::string& text) {
  std::vector<std::vector<int>> groups;
  std::stringstream ss(text);
  std::string group;
  while (std::getline(ss, group, '/')) {
    std::vector<int> bits;
    std::stringstream gs(group);
    std::string tok;
    while (std::getline(gs, tok, ',')) {
      if (tok.empty()) continue;
      try {
        bits.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw ArgumentError("tier partition: bad bit '" + tok + "' in '" + text + "'");
      }
    }
    groups.push_back(std::move(bits));
  }
  if (groups.size() != 3) {
    throw ArgumentError("tier partition: expected low/mid/high, got '" + text + "'");
  }
  TierPartition p{groups[0], groups[1], groups[2]};
  p.validate();
  return p;
}

std::string TierPartition::to_string() const {
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(v[i]);
    }
    return s;
  };
  return join(low) + "/" + join(mid) + "/" + join(high);
}

void TierPartition::validate() const {
  if (low.empty() || mid.empty() || high.empty()) {
    throw ArgumentError("tier partition: every tier must be non-empty");
  }
  auto check_sorted = [](const std::vector<int>& v, const char* name) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      BitWidth check(v[i]);  // range check
      if (i > 0 && v[i] <= v[i - 1]) {
        throw ArgumentError(std::string("tier partition: ") + name + " tier must be strictly increasing");
      }
    }
  };
  check_sorted(low, "low");
  check_sorted(mid, "mid");
  check_sorted(high, "high");
  if (!(low.back() < mid.front() && mid.back() < high.front())) {
    throw ArgumentError("tier partition: tiers must be ordered low < mid < high");
  }
}

std::vector<int> TierPartition::all_bits() const {
  std::vector<int> bits = low;
  bits.insert(bits.end(), mid.begin(), mid.end());
  bits.insert(bits.end(), high.begin(), high.end());
  return bits;
}

Tier TierPartition::tier_of(int bit) const {
  if (std::find(low.begin(), low.end(), bit) != low.end()) return Tier::Low;
  if (std::find(mid.begin(), mid.end(), bit) != mid.end()) return Tier::Mid;
  if (std::find(high.begin(), high.end(), bit) != high.end()) return Tier::High;
  throw UnsupportedBitError("bit " + std::to_string(bit) + " is not in the calibrated set " +
                            to_string());
}

bool TierPartition::contains(int bit) const {
  const std::vector<int> bits = all_bits();
  return std::find(bits.begin(), bits.end(), bit) != bits.end();
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "mae") return LossKind::MAE;
  if (name == "mse") return LossKind::MSE;
  throw ArgumentError("unknown loss kind: " + name);
}

const char* loss_kind_name(LossKind k) { return k == LossKind::MAE ? "mae" : "mse"; }

// ---- bit config -------------------------------------------------------------

BitConfig BitConfig::uniform(std::size_t layer_count, int weight_bits, std::optional<int> act_bits) {
  BitConfig cfg;
  cfg.layers.assign(layer_count, LayerBits{weight_bits, act_bits});
  return cfg;
}

double BitConfig::average_weight_bits() const {
  if (layers.empty()) return 0.0;
  double total = 0.0;
  for (const LayerBits& lb : layers) total += lb.weight_bits;
  return total / static_cast<double>(layers.size());
}

void BitConfig::write_file(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ArgumentError("cannot open for writing: " + path);
  f << "quept-bitconfig v1\n";
  f << "layers " << layers.size() << '\n';
  for (std::size_t i = 0; i < layers.size(); ++i) {
    f << "layer" << i << ' ' << layers[i].weight_bits << ' ';
    if (layers[i].act_bits.has_value()) {
      f << *layers[i].act_bits;
    } else {
      f << "fp";
    }
    f << '\n';
  }
}

BitConfig BitConfig::read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ArgumentError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "quept-bitconfig v1") {
    throw LoadError("bit config: bad header in " + path);
  }
  std::size_t count = 0;
  {
    std::string word;
    if (!std::getline(f, line)) throw LoadError("bit config: missing layer count");
    std::istringstream is(line);
    if (!(is >> word >> count) || word != "layers") throw LoadError("bit config: bad layer count line");
  }
  BitConfig cfg;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(f, line)) throw LoadError("bit config: truncated layer list");
    std::istringstream is(line);
    std::string name, act;
    int wbits = 0;
    if (!(is >> name >> wbits >> act)) throw LoadError("bit config: bad layer line '" + line + "'");
    LayerBits lb;
    lb.weight_bits = wbits;
    if (act != "fp") lb.act_bits = std::stoi(act);
    cfg.layers.push_back(lb);
  }
  return cfg;
}

// ---- calibration state --------------------------------------------------------

std::string CalibratedModel::layer_name(std::size_t block, std::size_t layer) const {
  return "block" + std::to_string(block) + "." + kLayerNames[layer];
}

CalibratedModel init_calibrated(const ToyModel& model, const TierPartition& tiers,
                                const CalibConfig& cfg) {
  tiers.validate();
  CalibratedModel cm;
  cm.model = model;
  cm.tiers = tiers;
  cm.calib = cfg;
  Rng rng(cfg.seed);
  const std::vector<int> bits = tiers.all_bits();
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    BlockQuantState bqs;
    for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
      const Tensor& w = model.blocks[l].weight(k);
      AdapterBank bank(cfg.adapter_mode, w.rows(), w.cols(), cfg.ranks, rng);
      LayerQuantState ls(std::move(bank));
      for (int b : bits) ls.clips.emplace(b, ClipPair::neutral());
      bqs.push_back(std::move(ls));
    }
    cm.qstate.push_back(std::move(bqs));
  }
  return cm;
}

std::array<int, 3> sample_bits(const TierPartition& tiers, Rng& rng) {
  const int b_l = tiers.low[rng.below(static_cast<std::uint32_t>(tiers.low.size()))];
  const int b_m = tiers.mid[rng.below(static_cast<std::uint32_t>(tiers.mid.size()))];
  const int b_h = tiers.high[rng.below(static_cast<std::uint32_t>(tiers.high.size()))];
  return {b_l, b_m, b_h};
}

// ---- block step ------------------------------------------------------------------

namespace {

std::vector<ParamSlice> tier_slices(CalibratedModel& cm, std::size_t block, Tier tier, int bit) {
  std::vector<ParamSlice> slices;
  for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
    LayerQuantState& ls = cm.qstate[block][k];
    if (cm.calib.use_adapters) {
      AdapterBank& bank = ls.adapter;
      switch (bank.mode()) {
        case AdapterMode::Cascaded: {
          const std::size_t r = bank.reachable_rank(tier);
          slices.push_back({bank.a(0), cm.calib.lr_adapter, UpdateRegion::RowPrefix, r});
          slices.push_back({bank.b(0), cm.calib.lr_adapter, UpdateRegion::ColPrefix, r});
          break;
        }
        case AdapterMode::FullyShared:
          slices.push_back({bank.a(0), cm.calib.lr_adapter, UpdateRegion::All, 0});
          slices.push_back({bank.b(0), cm.calib.lr_adapter, UpdateRegion::All, 0});
          break;
        case AdapterMode::Independent: {
          const std::size_t t = static_cast<std::size_t>(tier);
          slices.push_back({bank.a(t), cm.calib.lr_adapter, UpdateRegion::All, 0});
          slices.push_back({bank.b(t), cm.calib.lr_adapter, UpdateRegion::All, 0});
          break;
        }
      }
    }
    if (cm.calib.learn_clips) {
      ClipPair& cp = ls.clips.at(bit);
      slices.push_back({cp.alpha, cm.calib.lr_clip, UpdateRegion::All, 0});
      slices.push_back({cp.beta, cm.calib.lr_clip, UpdateRegion::All, 0});
    }
  }
  return slices;
}

}  // namespace

std::array<float, 3> block_step(CalibratedModel& cm, std::size_t block, const StepInputs& in,
                                const std::array<int, 3>& bits, Adam& adam) {
  for (int b : bits) {
    if (!cm.supports(b)) {
      throw ArgumentError("block_step: bit " + std::to_string(b) + " not in target set " +
                          cm.tiers.to_string());
    }
  }
  const std::size_t tokens = cm.model.cfg.tokens;
  const std::size_t n_seq = in.x_fp.rows() / tokens;
  std::array<float, 3> losses{};

  // High tier first so shared prefixes settle before low-bit gradients
  // diffuse into them.
  for (int t = 2; t >= 0; --t) {
    const Tier tier = static_cast<Tier>(t);
    const int bit = bits[static_cast<std::size_t>(t)];
    std::vector<ParamSlice> slices = tier_slices(cm, block, tier, bit);
    for (ParamSlice& s : slices) s.param.zero_grad();

    Tape tape;
    {
      Tape::Scope scope(tape);
      QuantSpec spec;
      spec.state = &cm.qstate[block];
      spec.weight_bits = bit;
      if (cm.calib.act_quant) spec.act_bits = bit;
      spec.tier = tier;
      spec.with_adapter = cm.calib.use_adapters;
      spec.weight_quant = cm.calib.weight_quant;
      const Variable y = forward_quant(cm.model.blocks[block], Variable(in.x_quant[t]), n_seq,
                                       tokens, cm.model.cfg.heads, spec);
      const Variable target(in.y_fp);
      const Variable loss =
          cm.calib.loss == LossKind::MAE ? mae(y, target) : mse(y, target);
      tape.backward(loss);
      losses[static_cast<std::size_t>(t)] = loss.value()[0];
    }
    if (!slices.empty()) adam.step(slices);
  }
  return losses;
}

// ---- calibration loop ---------------------------------------------------------------

namespace {

Tensor gather_sequences(const Tensor& flat, const std::vector<std::size_t>& seq_idx,
                        std::size_t tokens) {
  const std::size_t d = flat.cols();
  Tensor out({seq_idx.size() * tokens, d});
  for (std::size_t i = 0; i < seq_idx.size(); ++i) {
    for (std::size_t r = 0; r < tokens; ++r)
      for (std::size_t c = 0; c < d; ++c)
        out.at(i * tokens + r, c) = flat.at(seq_idx[i] * tokens + r, c);
  }
  return out;
}

Tensor seq_rows(const Tensor& flat, std::size_t seq, std::size_t tokens) {
  const std::size_t d = flat.cols();
  Tensor out({tokens, d});
  for (std::size_t r = 0; r < tokens; ++r)
    for (std::size_t c = 0; c < d; ++c) out.at(r, c) = flat.at(seq * tokens + r, c);
  return out;
}

void put_seq_rows(Tensor& flat, std::size_t seq, const Tensor& rows) {
  const std::size_t tokens = rows.rows(), d = rows.cols();
  for (std::size_t r = 0; r < tokens; ++r)
    for (std::size_t c = 0; c < d; ++c) flat.at(seq * tokens + r, c) = rows.at(r, c);
}

Tensor quant_block_value(const CalibratedModel& cm, std::size_t block, const Tensor& x,
                         std::size_t n_seq, int bit) {
  QuantSpec spec;
  spec.state = &cm.qstate[block];
  spec.weight_bits = bit;
  if (cm.calib.act_quant) spec.act_bits = bit;
  spec.tier = cm.tiers.tier_of(bit);
  spec.with_adapter = cm.calib.use_adapters;
  spec.weight_quant = cm.calib.weight_quant;
  return forward_quant(cm.model.blocks[block], Variable(x), n_seq, cm.model.cfg.tokens,
                       cm.model.cfg.heads, spec)
      .value();
}

/// Quantized-path inputs to `block` for the current step: the raw batch
/// pushed through every earlier block, fusing the three tier outputs via
/// token merging (or per-tier streams when merging is off).
std::array<Tensor, 3> propagate_quant_inputs(const CalibratedModel& cm, std::size_t block,
                                             const Tensor& x0, std::size_t n_seq,
                                             const std::array<int, 3>& bits, Rng& rng) {
  if (!cm.calib.tome_enabled) {
    std::array<Tensor, 3> xs = {x0, x0, x0};
    for (std::size_t j = 0; j < block; ++j) {
      for (std::size_t t = 0; t < 3; ++t) {
        xs[t] = quant_block_value(cm, j, xs[t], n_seq, bits[t]);
      }
    }
    return xs;
  }
  const std::size_t tokens = cm.model.cfg.tokens;
  Tensor x = x0;
  for (std::size_t j = 0; j < block; ++j) {
    const Tensor y_l = quant_block_value(cm, j, x, n_seq, bits[0]);
    const Tensor y_m = quant_block_value(cm, j, x, n_seq, bits[1]);
    const Tensor y_h = quant_block_value(cm, j, x, n_seq, bits[2]);
    Tensor merged(y_h.shape());
    for (std::size_t s = 0; s < n_seq; ++s) {
      const Tensor sl = seq_rows(y_l, s, tokens);
      const Tensor sm = seq_rows(y_m, s, tokens);
      const Tensor sh = seq_rows(y_h, s, tokens);
      AnchorSet phi;
      if (cm.calib.tome.merge_case == MergeCase::SelectiveMerge) {
        phi = select_anchors(sh, sl, cm.calib.tome.p);
      }
      put_seq_rows(merged, s, merge(sl, sm, sh, phi, cm.calib.tome, rng));
    }
    x = merged;
  }
  return {x, x, x};
}

}  // namespace

CalibratedModel calibrate_model(const ToyModel& model, const CalibSet& calib,
                                const TierPartition& tiers, const CalibConfig& cfg,
                                std::ostream* loss_log) {
  if (calib.n == 0 || calib.flat.empty()) throw ArgumentError("calibrate_model: empty calibration set");
  if (cfg.batch_size <= 0 || cfg.steps <= 0) {
    throw ArgumentError("calibrate_model: steps and batch size must be positive");
  }
  CalibratedModel cm = init_calibrated(model, tiers, cfg);
  const std::vector<int> bits = tiers.all_bits();
  const std::size_t n_blocks = model.blocks.size();
  const std::size_t tokens = model.cfg.tokens;

  // Full-precision path: block inputs/outputs over the whole set, computed once.
  std::vector<Tensor> fp_io;
  fp_io.reserve(n_blocks + 1);
  fp_io.push_back(calib.flat);
  for (std::size_t l = 0; l < n_blocks; ++l) {
    fp_io.push_back(forward_fp(model.blocks[l], fp_io.back(), calib.n, tokens, model.cfg.heads));
  }

  if (loss_log) *loss_log << "block,step,b_l,b_m,b_h,loss_l,loss_m,loss_h\n";

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);  // step stream, distinct from init stream
  Adam adam;
  for (std::size_t l = 0; l < n_blocks; ++l) {
    if (cfg.act_quant) {
      const auto sites = collect_linear_inputs(model.blocks[l], fp_io[l], calib.n, tokens,
                                               model.cfg.heads);
      for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
        for (int b : bits) {
          cm.qstate[l][k].act_scales[b] =
              init_act_scale({sites[k]}, BitWidth(b), cfg.act_percentile);
        }
      }
    }
    for (int step = 0; step < cfg.steps; ++step) {
      std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t& i : idx) i = rng.below(static_cast<std::uint32_t>(calib.n));
      const std::array<int, 3> bits3 = sample_bits(tiers, rng);

      StepInputs in;
      in.x_fp = gather_sequences(fp_io[l], idx, tokens);
      in.y_fp = gather_sequences(fp_io[l + 1], idx, tokens);
      const Tensor x0 = gather_sequences(calib.flat, idx, tokens);
      in.x_quant = propagate_quant_inputs(cm, l, x0, idx.size(), bits3, rng);

      const std::array<float, 3> losses = block_step(cm, l, in, bits3, adam);
      if (loss_log) {
        *loss_log << l << ',' << step << ',' << bits3[0] << ',' << bits3[1] << ',' << bits3[2]
                  << ',' << format_float(losses[0]) << ',' << format_float(losses[1]) << ','
                  << format_float(losses[2]) << '\n';
      }
    }
  }
  return cm;
}

// ---- configuration ----------------------------------------------------------------

DeployableModel configure(const CalibratedModel& cm, const BitConfig& cfg) {
  if (cfg.layers.size() != cm.model.layer_count()) {
    throw ArgumentError("configure: bit config has " + std::to_string(cfg.layers.size()) +
                        " layers, model has " + std::to_string(cm.model.layer_count()));
  }
  DeployableModel dm;
  dm.cfg = cm.model.cfg;
  dm.fp_blocks = cm.model.blocks;
  for (std::size_t l = 0; l < cm.model.blocks.size(); ++l) {
    std::array<DeployableModel::Layer, kLayersPerBlock> row;
    for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
      const LayerBits& lb = cfg.layers[l * kLayersPerBlock + k];
      if (!cm.supports(lb.weight_bits)) {
        throw UnsupportedBitError("configure: bit " + std::to_string(lb.weight_bits) +
                                  " unsupported at layer " + cm.layer_name(l, k));
      }
      const LayerQuantState& ls = cm.qstate[l][k];
      const Tier tier = cm.tiers.tier_of(lb.weight_bits);
      const Variable r = ls.adapter.compensation(tier);
      const ClipPair& clips = ls.clips.at(lb.weight_bits);
      DeployableModel::Layer dl;
      dl.weight_bits = lb.weight_bits;
      dl.w_hat = fake_quant_weight(Variable(cm.model.blocks[l].weight(k)), r, clips,
                                   BitWidth(lb.weight_bits))
                     .value();
      if (lb.act_bits.has_value()) {
        if (!cm.supports(*lb.act_bits)) {
          throw UnsupportedBitError("configure: activation bit " + std::to_string(*lb.act_bits) +
                                    " unsupported at layer " + cm.layer_name(l, k));
        }
        const auto it = ls.act_scales.find(*lb.act_bits);
        if (it == ls.act_scales.end()) {
          throw UnsupportedBitError("configure: no activation scale for bit " +
                                    std::to_string(*lb.act_bits) + " at layer " +
                                    cm.layer_name(l, k));
        }
        dl.act_bits = lb.act_bits;
        dl.act_scale = it->second;
      }
      row[k] = std::move(dl);
    }
    dm.layers.push_back(std::move(row));
  }
  return dm;
}

std::vector<Tensor> DeployableModel::forward_all(const Tensor& x, std::size_t n_seq) const {
  std::vector<Tensor> outs;
  outs.reserve(layers.size());
  Tensor cur = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& deployed = layers[l];
    const LinearFn fn = [&deployed](std::size_t li, const Tensor&, const Tensor& bias,
                                    const Variable& in) {
      const Layer& dl = deployed[li];
      Variable xin = in;
      if (dl.act_bits.has_value()) {
        xin = fake_quant_act(in, dl.act_scale, BitWidth(*dl.act_bits));
      }
      return add_rowvec(matmul(xin, transpose(Variable(dl.w_hat))), bias);
    };
    cur = block_forward(fp_blocks[l], Variable(cur), n_seq, cfg.tokens, cfg.heads, fn).value();
    outs.push_back(cur);
  }
  return outs;
}

Tensor DeployableModel::forward(const Tensor& x, std::size_t n_seq) const {
  return forward_all(x, n_seq).back();
}

std::vector<Tensor> DeployableModel::forward_fp_all(const Tensor& x, std::size_t n_seq) const {
  std::vector<Tensor> outs;
  outs.reserve(fp_blocks.size());
  Tensor cur = x;
  for (const BlockWeights& bw : fp_blocks) {
    cur = forward_fp(bw, cur, n_seq, cfg.tokens, cfg.heads);
    outs.push_back(cur);
  }
  return outs;
}

Tensor calibrated_forward_uniform(const CalibratedModel& cm, const Tensor& x, std::size_t n_seq,
                                  int weight_bits, std::optional<int> act_bits, bool with_adapter,
                                  bool neutral_clips) {
  if (!cm.supports(weight_bits)) {
    throw UnsupportedBitError("forward: bit " + std::to_string(weight_bits) +
                              " not in calibrated set " + cm.tiers.to_string());
  }
  Tensor cur = x;
  for (std::size_t l = 0; l < cm.model.blocks.size(); ++l) {
    QuantSpec spec;
    spec.state = &cm.qstate[l];
    spec.weight_bits = weight_bits;
    spec.act_bits = act_bits;
    spec.tier = cm.tiers.tier_of(weight_bits);
    spec.with_adapter = with_adapter;
    spec.neutral_clips = neutral_clips;
    cur = forward_quant(cm.model.blocks[l], Variable(cur), n_seq, cm.model.cfg.tokens,
                        cm.model.cfg.heads, spec)
              .value();
  }
  return cur;
}

// ---- artifact conversion -------------------------------------------------------------

namespace {
const char* kTierSuffix[3] = {"0", "1", "2"};  // Low, Mid, High
}

ModelArtifact calibrated_to_artifact(const CalibratedModel& cm) {
  ModelArtifact a;
  a.set_value("kind", "model");
  a.set_value("blocks", std::to_string(cm.model.cfg.blocks));
  a.set_value("dim", std::to_string(cm.model.cfg.dim));
  a.set_value("heads", std::to_string(cm.model.cfg.heads));
  a.set_value("tokens", std::to_string(cm.model.cfg.tokens));
  a.set_value("mlp_ratio", std::to_string(cm.model.cfg.mlp_ratio));
  a.set_value("model_seed", std::to_string(cm.model.cfg.seed));
  a.set_value("tiers", cm.tiers.to_string());
  a.set_value("ranks", std::to_string(cm.calib.ranks.r_h) + "," + std::to_string(cm.calib.ranks.r_m) +
                           "," + std::to_string(cm.calib.ranks.r_l));
  a.set_value("adapter_mode", adapter_mode_name(cm.calib.adapter_mode));
  a.set_value("act_quant", cm.calib.act_quant ? "1" : "0");

  const std::vector<int> bits = cm.tiers.all_bits();
  for (std::size_t l = 0; l < cm.model.blocks.size(); ++l) {
    for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
      const std::string base = cm.layer_name(l, k);
      const LayerQuantState& ls = cm.qstate[l][k];
      a.set_tensor(base + ".weight", cm.model.blocks[l].weight(k));
      a.set_tensor(base + ".bias", cm.model.blocks[l].bias(k));
      for (std::size_t p = 0; p < ls.adapter.pair_count(); ++p) {
        const std::string suffix = ls.adapter.pair_count() == 1 ? "" : kTierSuffix[p];
        a.set_tensor(base + ".adapter.A" + suffix, ls.adapter.a(p).value());
        a.set_tensor(base + ".adapter.B" + suffix, ls.adapter.b(p).value());
      }
      for (int b : bits) {
        const ClipPair& cp = ls.clips.at(b);
        a.set_tensor(base + ".clip" + std::to_string(b),
                     Tensor({2}, {cp.alpha.value()[0], cp.beta.value()[0]}));
      }
      if (cm.calib.act_quant) {
        Tensor scales({bits.size()});
        for (std::size_t i = 0; i < bits.size(); ++i) scales[i] = ls.act_scales.at(bits[i]);
        a.set_tensor(base + ".act_scales", scales);
      }
    }
  }
  return a;
}

CalibratedModel calibrated_from_artifact(const ModelArtifact& a) {
  if (a.value("kind") != "model") throw LoadError("artifact: expected kind 'model', got '" + a.value("kind") + "'");
  ModelConfig mc;
  mc.blocks = std::stoul(a.value("blocks"));
  mc.dim = std::stoul(a.value("dim"));
  mc.heads = std::stoul(a.value("heads"));
  mc.tokens = std::stoul(a.value("tokens"));
  mc.mlp_ratio = std::stoul(a.value("mlp_ratio"));
  mc.seed = std::stoull(a.value("model_seed"));

  CalibConfig cfg;
  {
    std::stringstream ss(a.value("ranks"));
    char comma;
    ss >> cfg.ranks.r_h >> comma >> cfg.ranks.r_m >> comma >> cfg.ranks.r_l;
  }
  cfg.adapter_mode = parse_adapter_mode(a.value("adapter_mode"));
  cfg.act_quant = a.value("act_quant") == "1";

  const TierPartition tiers = TierPartition::parse(a.value("tiers"));

  ToyModel model = ToyModel::random(mc);
  CalibratedModel cm = init_calibrated(model, tiers, cfg);
  const std::vector<int> bits = tiers.all_bits();
  for (std::size_t l = 0; l < cm.model.blocks.size(); ++l) {
    for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
      const std::string base = cm.layer_name(l, k);
      cm.model.blocks[l].weight(k) = a.tensor(base + ".weight");
      cm.model.blocks[l].bias(k) = a.tensor(base + ".bias");
      LayerQuantState& ls = cm.qstate[l][k];
      for (std::size_t p = 0; p < ls.adapter.pair_count(); ++p) {
        const std::string suffix = ls.adapter.pair_count() == 1 ? "" : kTierSuffix[p];
        const Tensor& av = a.tensor(base + ".adapter.A" + suffix);
        const Tensor& bv = a.tensor(base + ".adapter.B" + suffix);
        if (!av.same_shape(ls.adapter.a(p).value()) || !bv.same_shape(ls.adapter.b(p).value())) {
          throw LoadError("artifact: adapter shape mismatch at " + base);
        }
        ls.adapter.a(p).mutable_value() = av;
        ls.adapter.b(p).mutable_value() = bv;
      }
      for (int b : bits) {
        const Tensor& cp = a.tensor(base + ".clip" + std::to_string(b));
        if (cp.numel() != 2) throw LoadError("artifact: bad clip blob at " + base);
        ls.clips.at(b).alpha.mutable_value()[0] = cp[0];
        ls.clips.at(b).beta.mutable_value()[0] = cp[1];
      }
      if (cfg.act_quant) {
        const Tensor& scales = a.tensor(base + ".act_scales");
        if (scales.numel() != bits.size()) throw LoadError("artifact: bad act scale blob at " + base);
        for (std::size_t i = 0; i < bits.size(); ++i) ls.act_scales[bits[i]] = scales[i];
      }
    }
  }
  return cm;
}

ModelArtifact deployable_to_artifact(const DeployableModel& dm) {
  ModelArtifact a;
  a.set_value("kind", "deployable");
  a.set_value("blocks", std::to_string(dm.cfg.blocks));
  a.set_value("dim", std::to_string(dm.cfg.dim));
  a.set_value("heads", std::to_string(dm.cfg.heads));
  a.set_value("tokens", std::to_string(dm.cfg.tokens));
  a.set_value("mlp_ratio", std::to_string(dm.cfg.mlp_ratio));
  a.set_value("model_seed", std::to_string(dm.cfg.seed));
  for (std::size_t l = 0; l < dm.layers.size(); ++l) {
    for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
      const DeployableModel::Layer& dl = dm.layers[l][k];
      const std::string base = "block" + std::to_string(l) + "." + kLayerNames[k];
      a.set_value("bits." + base,
                  std::to_string(dl.weight_bits) + " " +
                      (dl.act_bits.has_value() ? std::to_string(*dl.act_bits) : std::string("fp")));
      a.set_tensor(base + ".w_hat", dl.w_hat);
      a.set_tensor(base + ".weight", dm.fp_blocks[l].weight(k));
      a.set_tensor(base + ".bias", dm.fp_blocks[l].bias(k));
      if (dl.act_bits.has_value()) {
        a.set_tensor(base + ".act_scale", Tensor::scalar(dl.act_scale));
      }
    }
  }
  return a;
}

DeployableModel deployable_from_artifact(const ModelArtifact& a) {
  if (a.value("kind") != "deployable") {
    throw LoadError("artifact: expected kind 'deployable', got '" + a.value("kind") + "'");
  }
  DeployableModel dm;
  dm.cfg.blocks = std::stoul(a.value("blocks"));
  dm.cfg.dim = std::stoul(a.value("dim"));
  dm.cfg.heads = std::stoul(a.value("heads"));
  dm.cfg.tokens = std::stoul(a.value("tokens"));
  dm.cfg.mlp_ratio = std::stoul(a.value("mlp_ratio"));
  dm.cfg.seed = std::stoull(a.value("model_seed"));
  for (std::size_t l = 0; l < dm.cfg.blocks; ++l) {
    BlockWeights bw;
    std::array<DeployableModel::Layer, kLayersPerBlock> row;
    for (std::size_t k = 0; k < kLayersPerBlock; ++k) {
      const std::string base = "block" + std::to_string(l) + "." + kLayerNames[k];
      bw.weight(k) = a.tensor(base + ".weight");
      bw.bias(k) = a.tensor(base + ".bias");
      DeployableModel::Layer dl;
      dl.w_hat = a.tensor(base + ".w_hat");
      std::istringstream bits(a.value("bits." + base));
      std::string act;
      bits >> dl.weight_bits >> act;
      if (act != "fp") {
        dl.act_bits = std::stoi(act);
        dl.act_scale = a.tensor(base + ".act_scale").item();
      }
      row[k] = std::move(dl);
    }
    dm.fp_blocks.push_back(std::move(bw));
    dm.layers.push_back(std::move(row));
  }
  return dm;
}

}  // namespace quept
