// Command-line harness: verify | sweep | toy | teacher-dynamics.

#include "linft/commands.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> out;
  std::optional<std::string> seeds;
  std::optional<std::string> lambda_grid;
  std::optional<std::string> beta_grid;
  std::optional<int> update_freq;
  std::optional<double> tau;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Path to a key=value config file");
  cmd->add_option("--out", flags.out, "Output path");
  cmd->add_option("--seeds", flags.seeds, "Comma-separated seed list");
  cmd->add_option("--lambda", flags.lambda_grid, "Comma-separated lambda grid");
  cmd->add_option("--beta", flags.beta_grid, "Comma-separated Beta kernel grid");
  cmd->add_option("--update-freq", flags.update_freq, "Teacher update frequency");
  cmd->add_option("--tau", flags.tau, "Distillation temperature");
}

linft::RunConfig build_config(const CommonFlags& flags) {
  linft::RunConfig cfg;
  if (flags.config_path) cfg = linft::load_config(*flags.config_path);
  if (flags.out) linft::apply_config_entry(cfg, "out", *flags.out);
  if (flags.seeds) linft::apply_config_entry(cfg, "seeds", *flags.seeds);
  if (flags.lambda_grid) linft::apply_config_entry(cfg, "lambda_grid", *flags.lambda_grid);
  if (flags.beta_grid) linft::apply_config_entry(cfg, "beta_grid", *flags.beta_grid);
  if (flags.update_freq) cfg.update_freq = *flags.update_freq;
  if (flags.tau) cfg.tau = *flags.tau;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linearized contrastive finetuning lab"};
  app.require_subcommand(1);

  CommonFlags verify_flags, sweep_flags, toy_flags, dynamics_flags;
  std::string sweep_axis = "lambda";
  std::string update_freq_grid;

  CLI::App* verify = app.add_subcommand("verify", "Run the theorem verification suite");
  add_common(verify, verify_flags);

  CLI::App* sweep = app.add_subcommand("sweep", "Ablation sweep over one axis");
  add_common(sweep, sweep_flags);
  sweep->add_option("--axis", sweep_axis, "Sweep axis: lambda | beta | update-freq");
  sweep->add_option("--update-freq-grid", update_freq_grid, "Comma-separated frequency grid");

  CLI::App* toy = app.add_subcommand("toy", "Synthetic spurious-correlation experiment");
  add_common(toy, toy_flags);

  CLI::App* dynamics = app.add_subcommand("teacher-dynamics", "EMA vs WMA teacher gap traces");
  add_common(dynamics, dynamics_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : linft::kExitUsage;
  }

  try {
    if (verify->parsed()) return linft::cmd_verify(build_config(verify_flags));
    if (sweep->parsed()) {
      linft::RunConfig cfg = build_config(sweep_flags);
      cfg.sweep_axis = sweep_axis;
      if (!update_freq_grid.empty())
        linft::apply_config_entry(cfg, "update_freq_grid", update_freq_grid);
      return linft::cmd_sweep(cfg);
    }
    if (toy->parsed()) return linft::cmd_toy(build_config(toy_flags));
    if (dynamics->parsed()) return linft::cmd_teacher_dynamics(build_config(dynamics_flags));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return linft::kExitUsage;
  }
  return linft::kExitUsage;
}
