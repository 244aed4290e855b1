// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "quept/model.hpp"
#include "quept/recon.hpp"

namespace quept::cli {

/// Every command writes a `<command>.manifest` with its fully resolved
/// configuration next to its outputs; re-running from that manifest
/// reproduces the outputs byte-identically.
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& kv);
std::map<std::string, std::string> read_manifest(const std::string& path);

struct CalibrateOptions {
  std::string out_dir = ".";
  std::string model_in;        // artifact to calibrate; empty = synthesize from seed
  std::string calib_in;        // calibration set artifact; empty = synthesize from seed
  std::string from_manifest;   // replay a previous run's configuration

  std::uint64_t seed = 0;
  std::size_t blocks = 2;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t tokens = 16;
  std::size_t mlp_ratio = 4;
  std::size_t calib_n = 256;

  std::string bits = "4,5,6,7,8";
  std::string tiers = "4/5,6/7,8";
  std::string ranks = "4,4,4";
  std::string adapter = "cascaded";
  int steps = 200;
  double lr_adapter = 1e-3;
  double lr_clip = 1e-4;
  int batch = 32;
  std::string loss = "mae";
  std::string tome_case = "selective";  // random | uniform | selective | off
  double tome_p = 0.5;
  std::string tome_lambdas = "1,1,1";
  double act_percentile = 0.999;
  bool weight_only = false;
  bool no_learn_clips = false;
  bool no_adapters = false;
};

struct SwitchOptions {
  std::string artifact;
  std::string out = "deploy.qpt";
  int uniform_bits = 0;     // 0 = use config file
  std::string config_file;  // bit config document
};

struct EvalOptions {
  std::string deployable;
  std::string data;
  std::string out_dir = ".";
};

struct AblateOptions {
  std::string study;  // tome | lora | modules
  std::string out_dir = ".";
  int seeds = 1;
  std::uint64_t seed = 0;

  // toy scale for the study arms
  std::size_t blocks = 2;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t tokens = 16;
  std::size_t mlp_ratio = 4;
  std::size_t calib_n = 256;
  std::string tiers = "4/5,6/7,8";
  std::string ranks = "4,4,4";
  int steps = 200;
  int batch = 32;
  bool weight_only = false;
};

struct AllocateOptions {
  std::string artifact;
  std::string data;
  double avg_bits = 4.0;
  std::string out_dir = ".";
};

struct ReportOptions {
  std::string artifact;
  std::string data;
  int bit = 4;
  std::string out_dir = ".";
};

int run_calibrate(const CalibrateOptions& opt);
int run_switch(const SwitchOptions& opt);
int run_eval(const EvalOptions& opt);
int run_ablate(const AblateOptions& opt);
int run_allocate(const AllocateOptions& opt);
int run_report(const ReportOptions& opt);

/// Ablation arm results: end-to-end MAE per uniform bit setting.
struct AblationRow {
  std::string arm;
  std::vector<double> mae_per_bit;
};
std::vector<AblationRow> ablate_study(const AblateOptions& opt, std::uint64_t seed);

// Calibration-set artifact round trip (same container as models).
ModelArtifact calibset_to_artifact(const CalibSet& cs);
CalibSet calibset_from_artifact(const ModelArtifact& artifact);

}  // namespace quept::cli
