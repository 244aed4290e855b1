// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "quept/cli.hpp"
#include "quept/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"QuEPT: elastic post-training quantization for transformer blocks"};
  app.require_subcommand(1);

  quept::cli::CalibrateOptions cal;
  CLI::App* calibrate = app.add_subcommand("calibrate", "one-shot multi-bit calibration");
  calibrate->add_option("-o,--out-dir", cal.out_dir, "output directory");
  calibrate->add_option("--model-in", cal.model_in, "model artifact to calibrate (default: synthesize)");
  calibrate->add_option("--calib-in", cal.calib_in, "calibration set artifact (default: synthesize)");
  calibrate->add_option("--from-manifest", cal.from_manifest, "replay a recorded configuration");
  calibrate->add_option("--seed", cal.seed, "master seed");
  calibrate->add_option("--blocks", cal.blocks, "transformer blocks");
  calibrate->add_option("--dim", cal.dim, "hidden dimension");
  calibrate->add_option("--heads", cal.heads, "attention heads");
  calibrate->add_option("--tokens", cal.tokens, "tokens per sequence");
  calibrate->add_option("--mlp-ratio", cal.mlp_ratio, "MLP expansion factor");
  calibrate->add_option("--calib-n", cal.calib_n, "calibration sequences");
  calibrate->add_option("--bits", cal.bits, "target bit set, e.g. 4,5,6,7,8");
  calibrate->add_option("--tiers", cal.tiers, "tier partition, e.g. 4/5,6/7,8");
  calibrate->add_option("--ranks", cal.ranks, "adapter rank partition r_h,r_m,r_l");
  calibrate->add_option("--adapter", cal.adapter, "adapter sharing: cascaded|shared|independent");
  calibrate->add_option("--steps", cal.steps, "optimization steps per block");
  calibrate->add_option("--lr-adapter", cal.lr_adapter, "adapter learning rate");
  calibrate->add_option("--lr-clip", cal.lr_clip, "clip learning rate");
  calibrate->add_option("--batch", cal.batch, "batch size (sequences)");
  calibrate->add_option("--loss", cal.loss, "reconstruction loss: mae|mse");
  calibrate->add_option("--tome-case", cal.tome_case, "token merging: random|uniform|selective|off");
  calibrate->add_option("--tome-p", cal.tome_p, "anchor fraction for selective merging");
  calibrate->add_option("--tome-lambdas", cal.tome_lambdas, "fusion weights high,mid,low");
  calibrate->add_option("--act-percentile", cal.act_percentile, "activation scale percentile");
  calibrate->add_flag("--weight-only", cal.weight_only, "skip activation quantization");
  calibrate->add_flag("--no-learn-clips", cal.no_learn_clips, "freeze clips at 1");
  calibrate->add_flag("--no-adapters", cal.no_adapters, "calibrate without adapters");

  quept::cli::SwitchOptions sw;
  CLI::App* switch_cmd = app.add_subcommand("switch", "configure a deployable at target bits");
  switch_cmd->add_option("artifact", sw.artifact, "calibrated model artifact")->required();
  switch_cmd->add_option("-o,--out", sw.out, "deployable output path");
  switch_cmd->add_option("--uniform", sw.uniform_bits, "uniform bit-width");
  switch_cmd->add_option("--config", sw.config_file, "per-layer bit config document");

  quept::cli::EvalOptions ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a deployable against full precision");
  eval_cmd->add_option("deployable", ev.deployable, "deployable artifact")->required();
  eval_cmd->add_option("data", ev.data, "calibration set artifact")->required();
  eval_cmd->add_option("-o,--out-dir", ev.out_dir, "output directory");

  quept::cli::AblateOptions ab;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run an ablation study at toy scale");
  ablate_cmd->add_option("--study", ab.study, "tome|lora|modules")->required();
  ablate_cmd->add_option("-o,--out-dir", ab.out_dir, "output directory");
  ablate_cmd->add_option("--seeds", ab.seeds, "number of seeds");
  ablate_cmd->add_option("--seed", ab.seed, "first seed");
  ablate_cmd->add_option("--blocks", ab.blocks, "transformer blocks");
  ablate_cmd->add_option("--dim", ab.dim, "hidden dimension");
  ablate_cmd->add_option("--heads", ab.heads, "attention heads");
  ablate_cmd->add_option("--tokens", ab.tokens, "tokens per sequence");
  ablate_cmd->add_option("--mlp-ratio", ab.mlp_ratio, "MLP expansion factor");
  ablate_cmd->add_option("--calib-n", ab.calib_n, "calibration sequences");
  ablate_cmd->add_option("--tiers", ab.tiers, "tier partition");
  ablate_cmd->add_option("--ranks", ab.ranks, "adapter rank partition");
  ablate_cmd->add_option("--steps", ab.steps, "steps per block");
  ablate_cmd->add_option("--batch", ab.batch, "batch size");
  ablate_cmd->add_flag("--weight-only", ab.weight_only, "skip activation quantization");

  quept::cli::AllocateOptions al;
  CLI::App* allocate_cmd = app.add_subcommand("allocate", "mixed-precision bit allocation");
  allocate_cmd->add_option("artifact", al.artifact, "calibrated model artifact")->required();
  allocate_cmd->add_option("data", al.data, "calibration set artifact")->required();
  allocate_cmd->add_option("--avg-bits", al.avg_bits, "average weight bit budget")->required();
  allocate_cmd->add_option("-o,--out-dir", al.out_dir, "output directory");

  quept::cli::ReportOptions rp;
  CLI::App* report_cmd = app.add_subcommand("report", "token divergence diagnostic");
  report_cmd->add_option("artifact", rp.artifact, "calibrated model artifact")->required();
  report_cmd->add_option("data", rp.data, "calibration set artifact")->required();
  report_cmd->add_option("--bit", rp.bit, "bit-width to diagnose");
  report_cmd->add_option("-o,--out-dir", rp.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*calibrate) return quept::cli::run_calibrate(cal);
    if (*switch_cmd) return quept::cli::run_switch(sw);
    if (*eval_cmd) return quept::cli::run_eval(ev);
    if (*ablate_cmd) return quept::cli::run_ablate(ab);
    if (*allocate_cmd) return quept::cli::run_allocate(al);
    if (*report_cmd) return quept::cli::run_report(rp);
  } catch (const quept::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
