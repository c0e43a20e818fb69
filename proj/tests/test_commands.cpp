#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "linft/commands.hpp"
#include "linft/csvio.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace linft;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir() {
  fs::path dir = fs::temp_directory_path() / "linft_cmd_tests";
  fs::create_directories(dir);
  return dir;
}

// A toy configuration small enough for unit-test latency.
RunConfig tiny_toy_config(const std::string& out) {
  RunConfig cfg;
  cfg.out = out;
  cfg.seeds = {1, 2};
  cfg.task.core_dim = 8;
  cfg.task.spurious_dim = 4;
  cfg.task.n_train = 96;
  cfg.task.n_eval = 128;
  cfg.dsd_horizon = 8;
  cfg.tracer_iters = 120;
  cfg.tracer_batch = 24;
  return cfg;
}

}  // namespace

TEST_CASE("config files parse with comments, lists and overrides") {
  fs::path path = workdir() / "config.txt";
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "seeds = 4, 5, 6\n";
    out << "lambda_grid = 0.5, 2.0\n";
    out << "n_train = 64   # trailing comment\n";
    out << "sweep_axis = beta\n";
  }
  RunConfig cfg = load_config(path.string());
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(cfg.lambda_grid == std::vector<double>{0.5, 2.0});
  CHECK(cfg.task.n_train == 64);
  CHECK(cfg.sweep_axis == "beta");

  apply_config_entry(cfg, "tau", "0.25");
  CHECK(cfg.tau == doctest::Approx(0.25));
  CHECK_THROWS_AS(apply_config_entry(cfg, "no_such_key", "1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_entry(cfg, "n_train", "abc"), std::invalid_argument);
}

TEST_CASE("csv fields are quoted per RFC 4180") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CsvBuilder b;
  b.row({"x", "y,z"});
  CHECK(b.str() == "x,\"y,z\"\n");
}

TEST_CASE("verify command passes on default-ish dimensions and writes a report") {
  RunConfig cfg;
  cfg.seeds = {1};
  cfg.out = (workdir() / "verify_report.json").string();
  const int rc = cmd_verify(cfg);
  CHECK(rc == kExitOk);

  auto report = nlohmann::json::parse(slurp(cfg.out));
  CHECK(report["command"] == "verify");
  CHECK(report["all_pass"] == true);
  REQUIRE(report["runs"].size() == 1);
  CHECK(report["runs"][0]["checks"].size() >= 12);
}

TEST_CASE("verify command fails loudly on an oversized gd step") {
  RunConfig cfg;
  cfg.seeds = {1};
  cfg.gd_step_factor = 1.6;  // beyond the stability bound
  cfg.out = (workdir() / "verify_unstable.json").string();
  const int rc = cmd_verify(cfg);
  CHECK(rc == kExitCheckFailed);

  auto report = nlohmann::json::parse(slurp(cfg.out));
  bool found = false;
  for (const auto& check : report["runs"][0]["checks"]) {
    if (check["name"] == "gd_stability") {
      found = true;
      CHECK(check["pass"] == false);
    }
  }
  CHECK(found);
}

TEST_CASE("verify command emits one block per seed") {
  RunConfig cfg;
  cfg.seeds = {1, 2, 3};
  cfg.out = (workdir() / "verify_three.json").string();
  CHECK(cmd_verify(cfg) == kExitOk);
  auto report = nlohmann::json::parse(slurp(cfg.out));
  CHECK(report["runs"].size() == 3);
}

TEST_CASE("sweep command validates its grid and axis") {
  RunConfig cfg = tiny_toy_config((workdir() / "sweep.csv").string());
  cfg.lambda_grid.clear();
  cfg.sweep_axis = "lambda";
  CHECK(cmd_sweep(cfg) == kExitUsage);
  cfg.sweep_axis = "bogus";
  CHECK(cmd_sweep(cfg) == kExitUsage);
}

TEST_CASE("lambda sweep emits rows per value, seed and strategy") {
  RunConfig cfg = tiny_toy_config((workdir() / "sweep_lambda.csv").string());
  cfg.lambda_grid = {0.1, 1.0, 10.0};
  CHECK(cmd_sweep(cfg) == kExitOk);
  const std::string text = slurp(cfg.out);
  CHECK(text.find("\r") == std::string::npos);  // LF endings only
  // comment + header + 3 lambdas x 2 seeds x 2 strategies
  long lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == 2 + 3 * 2 * 2);

  // static-SD task-subspace drift shrinks as lambda grows
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // comment
  std::getline(in, line);  // header
  double prev = 1e300;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string axis, value, seed, strategy, acc_o, acc_n, forget, drift, omega0;
    std::getline(row, axis, ',');
    std::getline(row, value, ',');
    std::getline(row, seed, ',');
    std::getline(row, strategy, ',');
    std::getline(row, acc_o, ',');
    std::getline(row, acc_n, ',');
    std::getline(row, forget, ',');
    std::getline(row, drift, ',');
    std::getline(row, omega0, ',');
    if (strategy == "static_sd" && seed == "1") {
      const double d = std::stod(drift);
      CHECK(d < prev);
      prev = d;
    }
  }
}

TEST_CASE("beta sweep reports larger omega0 for smaller beta") {
  RunConfig cfg = tiny_toy_config((workdir() / "sweep_beta.csv").string());
  cfg.sweep_axis = "beta";
  cfg.beta_grid = {0.2, 0.5, 1.0};
  cfg.seeds = {1};
  CHECK(cmd_sweep(cfg) == kExitOk);
  std::istringstream in(slurp(cfg.out));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  double prev = 1e300;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto last_comma = line.rfind(',');
    const double omega0 = std::stod(line.substr(last_comma + 1));
    CHECK(omega0 < prev);
    prev = omega0;
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("toy command writes metrics rows and an ordering summary") {
  RunConfig cfg = tiny_toy_config((workdir() / "toy.csv").string());
  CHECK(cmd_toy(cfg) == kExitOk);

  const std::string text = slurp(cfg.out);
  long lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == 2 + 6 * 2);  // comment + header + strategies x seeds

  auto summary = nlohmann::json::parse(slurp((workdir() / "toy_summary.json").string()));
  CHECK(summary["command"] == "toy");
  CHECK(summary.contains("ordering"));
  CHECK(summary["per_strategy"].size() == 6);
  REQUIRE(summary.contains("pareto"));

  // the dynamic teacher's row must not be dominated by plain finetuning
  nlohmann::json ft_row, dsd_row;
  for (const auto& row : summary["pareto"]) {
    if (row["strategy"] == "direct_ft") ft_row = row;
    if (row["strategy"] == "dynamic_sd") dsd_row = row;
  }
  REQUIRE_FALSE(ft_row.is_null());
  REQUIRE_FALSE(dsd_row.is_null());
  const bool ft_dominates =
      ft_row["acc_original"].get<double>() >= dsd_row["acc_original"].get<double>() &&
      ft_row["acc_new"].get<double>() >= dsd_row["acc_new"].get<double>() &&
      (ft_row["acc_original"].get<double>() > dsd_row["acc_original"].get<double>() ||
       ft_row["acc_new"].get<double>() > dsd_row["acc_new"].get<double>());
  CHECK_FALSE(ft_dominates);
}

TEST_CASE("toy command output is byte-identical across runs") {
  RunConfig a = tiny_toy_config((workdir() / "toy_a.csv").string());
  RunConfig b = tiny_toy_config((workdir() / "toy_b.csv").string());
  CHECK(cmd_toy(a) == kExitOk);
  CHECK(cmd_toy(b) == kExitOk);
  CHECK(slurp(a.out) == slurp(b.out));
  CHECK(slurp((workdir() / "toy_a_summary.json").string()) ==
        slurp((workdir() / "toy_b_summary.json").string()));
}

TEST_CASE("teacher dynamics traces both teachers per step") {
  RunConfig cfg = tiny_toy_config((workdir() / "dyn.csv").string());
  cfg.seeds = {1};
  cfg.dynamics_horizon = 40;
  CHECK(cmd_teacher_dynamics(cfg) == kExitOk);
  const std::string text = slurp(cfg.out);
  long lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == 2 + 41);

  // a frozen teacher (update_freq beyond the horizon) tracks the student's
  // distance from the start
  RunConfig frozen = tiny_toy_config((workdir() / "dyn_frozen.csv").string());
  frozen.seeds = {1};
  frozen.dynamics_horizon = 20;
  frozen.update_freq = 2500;
  CHECK(cmd_teacher_dynamics(frozen) == kExitOk);
  std::istringstream in(slurp(frozen.out));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string seed, step, omega;
    std::getline(row, seed, ',');
    std::getline(row, step, ',');
    std::getline(row, omega, ',');
    CHECK(std::stod(omega) == doctest::Approx(0.0));
  }
}

TEST_CASE("verify command output is byte-identical across runs") {
  RunConfig a;
  a.seeds = {7};
  a.out = (workdir() / "verify_a.json").string();
  RunConfig b = a;
  b.out = (workdir() / "verify_b.json").string();
  CHECK(cmd_verify(a) == kExitOk);
  CHECK(cmd_verify(b) == kExitOk);
  CHECK(slurp(a.out) == slurp(b.out));
}
