#pragma once

#include "linft/experiment.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace linft {

/// Parameters for the four CLI commands; loadable from a flat key=value
/// config file with flag overrides on top. Every field maps to one key of
/// the same name.
struct RunConfig {
  std::string out;                    // output path (per-command defaults)
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  // verify: random-instance dimensions and GD probing
  int d_img = 12;
  int n_batch = 8;
  int embed_dim = 6;
  int d_txt = 5;
  double gd_step_factor = 1.0;        // times max_step; > 1 violates the bound
  std::vector<double> lambda_grid = {0.1, 1.0, 10.0};

  // sweep
  std::string sweep_axis = "lambda";  // lambda | beta | update-freq
  std::vector<double> beta_grid = {0.2, 0.5, 1.0};
  std::vector<int> update_freq_grid = {1, 4, 16};

  // shared teacher/distillation knobs
  int update_freq = 1;
  double tau = 1.0;                   // distillation temperature
  double lambda_sd = 0.5;             // TracerToy outer coefficient
  double ema_rho = 0.9;

  // toy experiment
  SyntheticTask task;
  double toy_lambda = 1.0;
  int dsd_horizon = 3;
  int tracer_iters = 1500;
  int tracer_batch = 64;

  // teacher dynamics
  int dynamics_horizon = 500;
};

/// Loads `key = value` lines ('#' comments, commas separate list items).
/// Unknown keys are an error.
RunConfig load_config(const std::string& path);

/// Applies one key=value override onto cfg; throws on unknown key/bad value.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

/// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// Theorem-verification suite over seeded random instances; writes a JSON
/// report and returns 0 iff every check passes.
int cmd_verify(const RunConfig& cfg);

/// One-axis ablation sweep over the synthetic task; writes CSV.
int cmd_sweep(const RunConfig& cfg);

/// Runs all six strategies over the seed list; writes the per-run metrics
/// CSV plus a Pareto/ordering summary JSON next to it.
int cmd_toy(const RunConfig& cfg);

/// Matched EMA/WMA teachers on one student trajectory; writes per-step CSV.
int cmd_teacher_dynamics(const RunConfig& cfg);

}  // namespace linft
