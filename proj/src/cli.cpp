// SPDX-License-Identifier: Apache-2.0
#include "quept/cli.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "quept/errors.hpp"
#include "quept/optimizer.hpp"
#include "quept/sensitivity.hpp"
#include "quept/tome.hpp"

namespace quept::cli {

namespace fs = std::filesystem;

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot write manifest: " + path);
  for (const auto& [k, v] : kv) f << k << ' ' << v << '\n';
}

std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read manifest: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw UsageError("manifest: bad line '" + line + "'");
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return kv;
}

ModelArtifact calibset_to_artifact(const CalibSet& cs) {
  ModelArtifact a;
  a.set_value("kind", "calibset");
  a.set_value("n", std::to_string(cs.n));
  a.set_value("t", std::to_string(cs.t));
  a.set_value("d", std::to_string(cs.d));
  a.set_value("seed", std::to_string(cs.seed));
  a.set_tensor("data", cs.flat);
  return a;
}

CalibSet calibset_from_artifact(const ModelArtifact& a) {
  if (a.value("kind") != "calibset") {
    throw LoadError("artifact: expected kind 'calibset', got '" + a.value("kind") + "'");
  }
  CalibSet cs;
  cs.n = std::stoul(a.value("n"));
  cs.t = std::stoul(a.value("t"));
  cs.d = std::stoul(a.value("d"));
  cs.seed = std::stoull(a.value("seed"));
  cs.flat = a.tensor("data");
  if (cs.flat.rows() != cs.n * cs.t || cs.flat.cols() != cs.d) {
    throw LoadError("artifact: calibset shape does not match its manifest");
  }
  return cs;
}

namespace {

std::vector<int> parse_int_list(const std::string& text, char sep) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  return out;
}

RankPartition parse_ranks(const std::string& text) {
  const std::vector<int> v = parse_int_list(text, ',');
  if (v.size() != 3 || v[0] < 0 || v[1] < 0 || v[2] < 0) {
    throw UsageError("ranks: expected r_h,r_m,r_l, got '" + text + "'");
  }
  return RankPartition{static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]),
                       static_cast<std::size_t>(v[2])};
}

std::array<double, 3> parse_lambdas(const std::string& text) {
  std::array<double, 3> out{};
  std::stringstream ss(text);
  std::string tok;
  std::size_t i = 0;
  while (std::getline(ss, tok, ',') && i < 3) out[i++] = std::stod(tok);
  if (i != 3) throw UsageError("tome lambdas: expected three values, got '" + text + "'");
  return out;
}

struct ResolvedCalibrate {
  ModelConfig mc;
  CalibConfig cc;
  TierPartition tiers;
  std::size_t calib_n = 0;
};

ResolvedCalibrate resolve(const CalibrateOptions& opt) {
  ResolvedCalibrate r;
  r.mc.blocks = opt.blocks;
  r.mc.dim = opt.dim;
  r.mc.heads = opt.heads;
  r.mc.tokens = opt.tokens;
  r.mc.mlp_ratio = opt.mlp_ratio;
  r.mc.seed = opt.seed;
  r.calib_n = opt.calib_n;

  r.tiers = TierPartition::parse(opt.tiers);
  const std::vector<int> declared = parse_int_list(opt.bits, ',');
  if (declared != r.tiers.all_bits()) {
    throw UsageError("bits '" + opt.bits + "' do not match tier partition '" + opt.tiers + "'");
  }

  r.cc.steps = opt.steps;
  r.cc.lr_adapter = opt.lr_adapter;
  r.cc.lr_clip = opt.lr_clip;
  r.cc.batch_size = opt.batch;
  r.cc.seed = opt.seed;
  r.cc.loss = parse_loss_kind(opt.loss);
  if (opt.tome_case == "off") {
    r.cc.tome_enabled = false;
  } else {
    r.cc.tome_enabled = true;
    r.cc.tome = MergePolicy::make(parse_merge_case(opt.tome_case), opt.tome_p,
                                  parse_lambdas(opt.tome_lambdas));
  }
  r.cc.act_quant = !opt.weight_only;
  r.cc.act_percentile = opt.act_percentile;
  r.cc.ranks = parse_ranks(opt.ranks);
  r.cc.adapter_mode = parse_adapter_mode(opt.adapter);
  r.cc.learn_clips = !opt.no_learn_clips;
  r.cc.use_adapters = !opt.no_adapters;
  return r;
}

std::vector<std::pair<std::string, std::string>> calibrate_manifest(const CalibrateOptions& opt) {
  return {
      {"command", "calibrate"},
      {"seed", std::to_string(opt.seed)},
      {"blocks", std::to_string(opt.blocks)},
      {"dim", std::to_string(opt.dim)},
      {"heads", std::to_string(opt.heads)},
      {"tokens", std::to_string(opt.tokens)},
      {"mlp_ratio", std::to_string(opt.mlp_ratio)},
      {"calib_n", std::to_string(opt.calib_n)},
      {"bits", opt.bits},
      {"tiers", opt.tiers},
      {"ranks", opt.ranks},
      {"adapter", opt.adapter},
      {"steps", std::to_string(opt.steps)},
      {"lr_adapter", format_float(opt.lr_adapter)},
      {"lr_clip", format_float(opt.lr_clip)},
      {"batch", std::to_string(opt.batch)},
      {"loss", opt.loss},
      {"tome_case", opt.tome_case},
      {"tome_p", format_float(opt.tome_p)},
      {"tome_lambdas", opt.tome_lambdas},
      {"act_percentile", format_float(opt.act_percentile)},
      {"weight_only", opt.weight_only ? "1" : "0"},
      {"no_learn_clips", opt.no_learn_clips ? "1" : "0"},
      {"no_adapters", opt.no_adapters ? "1" : "0"},
      {"model_in", opt.model_in},
      {"calib_in", opt.calib_in},
  };
}

CalibrateOptions apply_manifest(CalibrateOptions opt) {
  const auto kv = read_manifest(opt.from_manifest);
  auto get = [&kv](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw UsageError("manifest: missing key '" + k + "'");
    return it->second;
  };
  if (get("command") != "calibrate") throw UsageError("manifest: not a calibrate manifest");
  opt.seed = std::stoull(get("seed"));
  opt.blocks = std::stoul(get("blocks"));
  opt.dim = std::stoul(get("dim"));
  opt.heads = std::stoul(get("heads"));
  opt.tokens = std::stoul(get("tokens"));
  opt.mlp_ratio = std::stoul(get("mlp_ratio"));
  opt.calib_n = std::stoul(get("calib_n"));
  opt.bits = get("bits");
  opt.tiers = get("tiers");
  opt.ranks = get("ranks");
  opt.adapter = get("adapter");
  opt.steps = std::stoi(get("steps"));
  opt.lr_adapter = parse_float(get("lr_adapter"));
  opt.lr_clip = parse_float(get("lr_clip"));
  opt.batch = std::stoi(get("batch"));
  opt.loss = get("loss");
  opt.tome_case = get("tome_case");
  opt.tome_p = parse_float(get("tome_p"));
  opt.tome_lambdas = get("tome_lambdas");
  opt.act_percentile = parse_float(get("act_percentile"));
  opt.weight_only = get("weight_only") == "1";
  opt.no_learn_clips = get("no_learn_clips") == "1";
  opt.no_adapters = get("no_adapters") == "1";
  opt.model_in = get("model_in");
  opt.calib_in = get("calib_in");
  return opt;
}

std::optional<int> act_bits_for(const CalibratedModel& cm, int bit) {
  if (cm.calib.act_quant) return bit;
  return std::nullopt;
}

}  // namespace

int run_calibrate(const CalibrateOptions& raw) {
  CalibrateOptions opt = raw;
  if (!opt.from_manifest.empty()) opt = apply_manifest(std::move(opt));
  const ResolvedCalibrate r = resolve(opt);
  fs::create_directories(opt.out_dir);

  ToyModel model;
  if (opt.model_in.empty()) {
    model = ToyModel::random(r.mc);
  } else {
    model = calibrated_from_artifact(load_artifact(opt.model_in)).model;
  }
  CalibSet calib;
  if (opt.calib_in.empty()) {
    calib = gen_calib(opt.seed, r.calib_n, model.cfg.tokens, model.cfg.dim);
  } else {
    calib = calibset_from_artifact(load_artifact(opt.calib_in));
  }
  if (calib.t != model.cfg.tokens || calib.d != model.cfg.dim) {
    throw UsageError("calibration set shape does not match the model");
  }

  const std::string log_path = (fs::path(opt.out_dir) / "loss_log.csv").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw UsageError("cannot write loss log: " + log_path);
  const CalibratedModel cm = calibrate_model(model, calib, r.tiers, r.cc, &log);
  log.close();

  save_artifact(calibrated_to_artifact(cm), (fs::path(opt.out_dir) / "model.qpt").string());
  save_artifact(calibset_to_artifact(calib), (fs::path(opt.out_dir) / "calib.qpt").string());
  write_manifest((fs::path(opt.out_dir) / "calibrate.manifest").string(), calibrate_manifest(opt));
  std::cout << "calibrated " << model.cfg.blocks << " blocks over bits " << r.tiers.to_string()
            << " -> " << (fs::path(opt.out_dir) / "model.qpt").string() << '\n';
  return 0;
}

int run_switch(const SwitchOptions& opt) {
  if ((opt.uniform_bits == 0) == opt.config_file.empty()) {
    throw UsageError("switch: pass exactly one of --uniform or --config");
  }
  const CalibratedModel cm = calibrated_from_artifact(load_artifact(opt.artifact));
  BitConfig cfg;
  if (opt.uniform_bits != 0) {
    cfg = BitConfig::uniform(cm.model.layer_count(), opt.uniform_bits,
                             act_bits_for(cm, opt.uniform_bits));
  } else {
    cfg = BitConfig::read_file(opt.config_file);
  }
  const std::uint64_t steps_before = optimizer_step_count();
  const DeployableModel dm = configure(cm, cfg);
  const std::uint64_t steps_taken = optimizer_step_count() - steps_before;
  save_artifact(deployable_to_artifact(dm), opt.out);

  const fs::path manifest_path = fs::path(opt.out).parent_path() / "switch.manifest";
  write_manifest(manifest_path.string(),
                 {{"command", "switch"},
                  {"artifact", opt.artifact},
                  {"uniform", std::to_string(opt.uniform_bits)},
                  {"config", opt.config_file},
                  {"out", opt.out}});
  std::cout << "configured deployable (avg weight bits " << format_float(cfg.average_weight_bits())
            << "), optimizer steps taken: " << steps_taken << '\n';
  return 0;
}

int run_eval(const EvalOptions& opt) {
  const DeployableModel dm = deployable_from_artifact(load_artifact(opt.deployable));
  const CalibSet cs = calibset_from_artifact(load_artifact(opt.data));
  if (cs.t != dm.cfg.tokens || cs.d != dm.cfg.dim) {
    throw DimensionError("eval: data shape does not match the deployable");
  }
  fs::create_directories(opt.out_dir);

  const std::vector<Tensor> q_all = dm.forward_all(cs.flat, cs.n);
  const std::vector<Tensor> fp_all = dm.forward_fp_all(cs.flat, cs.n);
  const double e2e = mae(q_all.back(), fp_all.back());

  std::ofstream metrics((fs::path(opt.out_dir) / "metrics.csv").string(), std::ios::trunc);
  metrics << "metric,value\n";
  metrics << "e2e_mae," << format_float(e2e) << '\n';
  for (std::size_t l = 0; l < q_all.size(); ++l) {
    metrics << "block" << l << "_mae," << format_float(mae(q_all[l], fp_all[l])) << '\n';
  }
  metrics.close();

  // Token divergence between the final full-precision and quantized features.
  std::vector<std::tuple<std::size_t, std::size_t, double>> rows;
  for (std::size_t s = 0; s < cs.n; ++s) {
    Tensor fp_seq({cs.t, cs.d}), q_seq({cs.t, cs.d});
    for (std::size_t r = 0; r < cs.t; ++r)
      for (std::size_t c = 0; c < cs.d; ++c) {
        fp_seq.at(r, c) = fp_all.back().at(s * cs.t + r, c);
        q_seq.at(r, c) = q_all.back().at(s * cs.t + r, c);
      }
    for (const auto& [tok, ks] : token_divergence_report(fp_seq, q_seq)) {
      rows.emplace_back(s, tok, ks);
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return std::get<2>(a) > std::get<2>(b); });
  std::ofstream ks_csv((fs::path(opt.out_dir) / "ks_report.csv").string(), std::ios::trunc);
  ks_csv << "seq,token,ks\n";
  for (const auto& [s, tok, ks] : rows) {
    ks_csv << s << ',' << tok << ',' << format_float(ks) << '\n';
  }
  ks_csv.close();

  std::ofstream summary((fs::path(opt.out_dir) / "summary.txt").string(), std::ios::trunc);
  summary << "sequences " << cs.n << "\n";
  summary << "end-to-end mae vs full precision " << format_float(e2e) << "\n";
  for (std::size_t l = 0; l < q_all.size(); ++l) {
    summary << "block " << l << " mae " << format_float(mae(q_all[l], fp_all[l])) << "\n";
  }
  summary.close();

  write_manifest((fs::path(opt.out_dir) / "eval.manifest").string(),
                 {{"command", "eval"}, {"deployable", opt.deployable}, {"data", opt.data}});
  std::cout << "e2e mae " << format_float(e2e) << '\n';
  return 0;
}

namespace {

struct Arm {
  std::string name;
  std::function<void(CalibrateOptions&)> tweak;
};

std::vector<Arm> study_arms(const std::string& study) {
  if (study == "tome") {
    return {
        {"case1_random", [](CalibrateOptions& o) { o.tome_case = "random"; }},
        {"case2_uniform", [](CalibrateOptions& o) { o.tome_case = "uniform"; }},
        {"case3_selective", [](CalibrateOptions& o) { o.tome_case = "selective"; }},
    };
  }
  if (study == "lora") {
    return {
        {"fully_shared", [](CalibrateOptions& o) { o.adapter = "shared"; }},
        {"independent", [](CalibrateOptions& o) { o.adapter = "independent"; }},
        {"cascaded", [](CalibrateOptions& o) { o.adapter = "cascaded"; }},
    };
  }
  if (study == "modules") {
    auto base = [](CalibrateOptions& o) {
      o.no_learn_clips = true;
      o.adapter = "independent";
      o.tome_case = "off";
      o.loss = "mse";
    };
    return {
        {"baseline", base},
        {"clip",
         [base](CalibrateOptions& o) {
           base(o);
           o.no_learn_clips = false;
         }},
        {"clip+clora",
         [base](CalibrateOptions& o) {
           base(o);
           o.no_learn_clips = false;
           o.adapter = "cascaded";
         }},
        {"clip+tome",
         [base](CalibrateOptions& o) {
           base(o);
           o.no_learn_clips = false;
           o.tome_case = "selective";
         }},
        {"clip+clora+tome",
         [base](CalibrateOptions& o) {
           base(o);
           o.no_learn_clips = false;
           o.adapter = "cascaded";
           o.tome_case = "selective";
         }},
        {"clip+clora+tome+mae",
         [base](CalibrateOptions& o) {
           base(o);
           o.no_learn_clips = false;
           o.adapter = "cascaded";
           o.tome_case = "selective";
           o.loss = "mae";
         }},
    };
  }
  throw UsageError("unknown ablation study: " + study);
}

}  // namespace

std::vector<AblationRow> ablate_study(const AblateOptions& opt, std::uint64_t seed) {
  CalibrateOptions base;
  base.seed = seed;
  base.blocks = opt.blocks;
  base.dim = opt.dim;
  base.heads = opt.heads;
  base.tokens = opt.tokens;
  base.mlp_ratio = opt.mlp_ratio;
  base.calib_n = opt.calib_n;
  base.tiers = opt.tiers;
  base.bits = [&] {
    std::string s;
    for (int b : TierPartition::parse(opt.tiers).all_bits()) {
      if (!s.empty()) s += ',';
      s += std::to_string(b);
    }
    return s;
  }();
  base.ranks = opt.ranks;
  base.steps = opt.steps;
  base.batch = opt.batch;
  base.weight_only = opt.weight_only;

  // Shared inputs: every arm sees the same model and data.
  const ResolvedCalibrate shared = resolve(base);
  const ToyModel model = ToyModel::random(shared.mc);
  const CalibSet calib = gen_calib(seed, shared.calib_n, shared.mc.tokens, shared.mc.dim);

  std::vector<AblationRow> rows;
  for (const Arm& arm : study_arms(opt.study)) {
    CalibrateOptions arm_opt = base;
    arm.tweak(arm_opt);
    const ResolvedCalibrate r = resolve(arm_opt);
    const CalibratedModel cm = calibrate_model(model, calib, r.tiers, r.cc, nullptr);
    AblationRow row;
    row.arm = arm.name;
    const Tensor fp_final = forward_fp_all(cm.model, calib.flat, calib.n).back();
    for (int b : cm.bits()) {
      const Tensor q =
          calibrated_forward_uniform(cm, calib.flat, calib.n, b, act_bits_for(cm, b));
      row.mae_per_bit.push_back(mae(q, fp_final));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int run_ablate(const AblateOptions& opt) {
  if (opt.seeds <= 0) throw UsageError("ablate: seeds must be positive");
  fs::create_directories(opt.out_dir);
  const std::vector<int> bits = TierPartition::parse(opt.tiers).all_bits();

  std::ofstream csv((fs::path(opt.out_dir) / ("ablate_" + opt.study + ".csv")).string(),
                    std::ios::trunc);
  csv << "study,seed,arm";
  for (int b : bits) csv << ",w" << b << (opt.weight_only ? "" : ("a" + std::to_string(b)));
  csv << '\n';

  std::map<std::string, std::vector<double>> totals;
  std::vector<std::string> arm_order;
  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(s);
    for (const AblationRow& row : ablate_study(opt, seed)) {
      csv << opt.study << ',' << seed << ',' << row.arm;
      for (double v : row.mae_per_bit) csv << ',' << format_float(v);
      csv << '\n';
      auto [it, fresh] = totals.try_emplace(row.arm, std::vector<double>(bits.size(), 0.0));
      if (fresh) arm_order.push_back(row.arm);
      for (std::size_t i = 0; i < bits.size(); ++i) (*it).second[i] += row.mae_per_bit[i];
    }
  }
  csv.close();

  std::cout << "study " << opt.study << " (mean e2e mae over " << opt.seeds << " seed(s))\n";
  for (const std::string& arm : arm_order) {
    std::cout << "  " << arm << ':';
    for (double v : totals[arm]) std::cout << ' ' << format_float(v / opt.seeds);
    std::cout << '\n';
  }

  write_manifest((fs::path(opt.out_dir) / "ablate.manifest").string(),
                 {{"command", "ablate"},
                  {"study", opt.study},
                  {"seeds", std::to_string(opt.seeds)},
                  {"seed", std::to_string(opt.seed)},
                  {"blocks", std::to_string(opt.blocks)},
                  {"dim", std::to_string(opt.dim)},
                  {"heads", std::to_string(opt.heads)},
                  {"tokens", std::to_string(opt.tokens)},
                  {"mlp_ratio", std::to_string(opt.mlp_ratio)},
                  {"calib_n", std::to_string(opt.calib_n)},
                  {"tiers", opt.tiers},
                  {"ranks", opt.ranks},
                  {"steps", std::to_string(opt.steps)},
                  {"batch", std::to_string(opt.batch)},
                  {"weight_only", opt.weight_only ? "1" : "0"}});
  return 0;
}

int run_allocate(const AllocateOptions& opt) {
  const CalibratedModel cm = calibrated_from_artifact(load_artifact(opt.artifact));
  const CalibSet cs = calibset_from_artifact(load_artifact(opt.data));
  fs::create_directories(opt.out_dir);

  const SensitivityTable table = build_sensitivity_table(cm, cs);
  table.write_csv((fs::path(opt.out_dir) / "sensitivity.csv").string());

  const Budget budget{opt.avg_bits, cm.model.layer_count()};
  const Allocation alloc = allocate_dp(table, budget);

  BitConfig cfg;
  for (int b : alloc.bits_per_layer) cfg.layers.push_back(LayerBits{b, std::nullopt});
  cfg.write_file((fs::path(opt.out_dir) / "alloc.bitcfg").string());

  write_manifest((fs::path(opt.out_dir) / "allocate.manifest").string(),
                 {{"command", "allocate"},
                  {"artifact", opt.artifact},
                  {"data", opt.data},
                  {"avg_bits", format_float(opt.avg_bits)}});
  std::cout << "allocation achieved avg " << format_float(alloc.achieved_avg)
            << " bits, total sensitivity " << format_float(alloc.total_sensitivity) << '\n';
  return 0;
}

int run_report(const ReportOptions& opt) {
  const CalibratedModel cm = calibrated_from_artifact(load_artifact(opt.artifact));
  const CalibSet cs = calibset_from_artifact(load_artifact(opt.data));
  if (cs.t != cm.model.cfg.tokens || cs.d != cm.model.cfg.dim) {
    throw DimensionError("report: data shape does not match the model");
  }
  fs::create_directories(opt.out_dir);

  const Tensor fp_final = forward_fp_all(cm.model, cs.flat, cs.n).back();
  const Tensor q_final =
      calibrated_forward_uniform(cm, cs.flat, cs.n, opt.bit, act_bits_for(cm, opt.bit));

  std::vector<std::tuple<std::size_t, std::size_t, double>> rows;
  for (std::size_t s = 0; s < cs.n; ++s) {
    Tensor fp_seq({cs.t, cs.d}), q_seq({cs.t, cs.d});
    for (std::size_t r = 0; r < cs.t; ++r)
      for (std::size_t c = 0; c < cs.d; ++c) {
        fp_seq.at(r, c) = fp_final.at(s * cs.t + r, c);
        q_seq.at(r, c) = q_final.at(s * cs.t + r, c);
      }
    for (const auto& [tok, ks] : token_divergence_report(fp_seq, q_seq)) {
      rows.emplace_back(s, tok, ks);
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return std::get<2>(a) > std::get<2>(b); });

  std::ofstream csv((fs::path(opt.out_dir) / "report.csv").string(), std::ios::trunc);
  csv << "seq,token,ks\n";
  for (const auto& [s, tok, ks] : rows) csv << s << ',' << tok << ',' << format_float(ks) << '\n';
  csv.close();

  write_manifest((fs::path(opt.out_dir) / "report.manifest").string(),
                 {{"command", "report"},
                  {"artifact", opt.artifact},
                  {"data", opt.data},
                  {"bit", std::to_string(opt.bit)}});
  std::cout << "wrote token divergence report for bit " << opt.bit << '\n';
  return 0;
}

}  // namespace quept::cli
