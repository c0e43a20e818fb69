#include "linft/commands.hpp"

#include "linft/csvio.hpp"
#include "linft/gd.hpp"
#include "linft/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace linft {

using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    const auto begin = item.find_first_not_of(" \t");
    const auto end = item.find_last_not_of(" \t");
    if (begin == std::string::npos) continue;
    out.push_back(item.substr(begin, end - begin + 1));
  }
  return out;
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad number: " + v);
  return x;
}

int parse_int(const std::string& v) {
  std::size_t pos = 0;
  const long x = std::stol(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad integer: " + v);
  return static_cast<int>(x);
}

std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(item));
  return out;
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) out.push_back(parse_int(item));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(v)) out.push_back(std::stoull(item));
  return out;
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "out") cfg.out = value;
  else if (key == "seeds") cfg.seeds = parse_seed_list(value);
  else if (key == "d_img") cfg.d_img = parse_int(value);
  else if (key == "n_batch") cfg.n_batch = parse_int(value);
  else if (key == "embed_dim") cfg.embed_dim = parse_int(value);
  else if (key == "d_txt") cfg.d_txt = parse_int(value);
  else if (key == "gd_step_factor") cfg.gd_step_factor = parse_double(value);
  else if (key == "lambda_grid") cfg.lambda_grid = parse_double_list(value);
  else if (key == "sweep_axis") cfg.sweep_axis = value;
  else if (key == "beta_grid") cfg.beta_grid = parse_double_list(value);
  else if (key == "update_freq_grid") cfg.update_freq_grid = parse_int_list(value);
  else if (key == "update_freq") cfg.update_freq = parse_int(value);
  else if (key == "tau") cfg.tau = parse_double(value);
  else if (key == "lambda_sd") cfg.lambda_sd = parse_double(value);
  else if (key == "ema_rho") cfg.ema_rho = parse_double(value);
  else if (key == "core_dim") cfg.task.core_dim = parse_int(value);
  else if (key == "spurious_dim") cfg.task.spurious_dim = parse_int(value);
  else if (key == "n_classes") cfg.task.n_classes = parse_int(value);
  else if (key == "spurious_corr") cfg.task.spurious_corr = parse_double(value);
  else if (key == "n_train") cfg.task.n_train = parse_int(value);
  else if (key == "n_eval") cfg.task.n_eval = parse_int(value);
  else if (key == "noise_sigma") cfg.task.noise_sigma = parse_double(value);
  else if (key == "task_embed_dim") cfg.task.embed_dim = parse_int(value);
  else if (key == "toy_lambda") cfg.toy_lambda = parse_double(value);
  else if (key == "dsd_horizon") cfg.dsd_horizon = parse_int(value);
  else if (key == "tracer_iters") cfg.tracer_iters = parse_int(value);
  else if (key == "tracer_batch") cfg.tracer_batch = parse_int(value);
  else if (key == "dynamics_horizon") cfg.dynamics_horizon = parse_int(value);
  else throw std::invalid_argument("unknown config key: " + key);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

namespace {

struct Check {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
};

struct VerifyInstance {
  FinetuneInstance inst;
  TargetProblem prob;
};

// Random instance with a controlled feature spectrum (singular values in
// [1, 2]) so conditioning-sensitive checks are not flaky.
VerifyInstance make_instance(const RunConfig& cfg, Rng& rng) {
  const int d = cfg.d_img, n = cfg.n_batch, p = cfg.embed_dim, dt = cfg.d_txt;
  Mat a = rng.gaussian(d, n);
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index r = svd.singularValues().size();
  Eigen::VectorXd sigma(r);
  for (Eigen::Index i = 0; i < r; ++i)
    sigma(i) = 1.0 + static_cast<double>(i) / std::max<Eigen::Index>(1, r - 1);
  VerifyInstance v;
  v.inst.x_img = svd.matrixU() * sigma.asDiagonal() * svd.matrixV().transpose();
  v.inst.x_txt = rng.gaussian(dt, n, 0.25);
  v.inst.w_img0 = rng.gaussian(p, d);
  v.inst.w_txt0 = rng.gaussian(p, dt);
  v.inst.rho = 0.05;
  v.prob = TargetProblem::build(v.inst);
  return v;
}

std::vector<Check> run_verify_checks(const RunConfig& cfg, std::uint64_t seed) {
  std::vector<Check> checks;
  Rng rng(seed);
  VerifyInstance v = make_instance(cfg, rng);

  auto add = [&](std::string name, double measured, double threshold) {
    checks.push_back({std::move(name), measured < threshold, measured, threshold});
  };

  {  // Penrose conditions on a spread of random shapes
    double worst = 0.0;
    for (int t = 0; t < 6; ++t) {
      const int rows = 2 + rng.uniform_int(31);
      const int cols = 2 + rng.uniform_int(31);
      Mat a = rng.gaussian(rows, cols);
      Mat ap = pinv(a);
      worst = std::max(worst, (a * ap * a - a).norm() / (1.0 + a.norm()));
      worst = std::max(worst, (ap * a * ap - ap).norm() / (1.0 + ap.norm()));
      worst = std::max(worst, ((a * ap).transpose() - a * ap).norm() / (1.0 + (a * ap).norm()));
      worst = std::max(worst, ((ap * a).transpose() - ap * a).norm() / (1.0 + (ap * a).norm()));
    }
    add("pinv_penrose", worst, 1e-9);
  }
  {
    const Mat& p = v.prob.p_i;
    double worst = (p * p - p).norm();
    worst = std::max(worst, (p.transpose() - p).norm());
    worst = std::max(worst, ((Mat::Identity(p.rows(), p.cols()) - p) * v.inst.x_img).norm() /
                                (1e-30 + v.inst.x_img.norm()));
    add("projector_properties", worst, 1e-9);
  }
  {
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      Mat w = rng.gaussian(cfg.embed_dim, cfg.d_img);
      auto rep = trace_identity_check(v.inst, w);
      worst = std::max(worst, std::abs(rep.lhs - rep.rhs) / (1.0 + std::abs(rep.lhs)));
    }
    add("trace_identity", worst, 1e-10);
  }
  {
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      Mat w = rng.gaussian(cfg.embed_dim, cfg.d_img);
      Mat s = similarity_matrix(w, v.inst.w_txt0, v.inst.x_img, v.inst.x_txt);
      const double lhs = l_cl(s);
      const double rhs = -(v.prob.y_ft.transpose() * (w * v.inst.x_img)).trace();
      worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
    }
    add("lcl_trace_equivalence", worst, 1e-10);
  }
  {  // analytic gradient of the least-squares objective vs central differences
    Mat w = rng.gaussian(cfg.embed_dim, cfg.d_img);
    Mat g = ls_gradient(w, v.prob, v.inst.x_img);
    const double h = 1e-5;
    double worst = 0.0;
    for (int t = 0; t < 40; ++t) {
      const auto i = rng.uniform_int(static_cast<int>(w.rows()));
      const auto j = rng.uniform_int(static_cast<int>(w.cols()));
      const double saved = w(i, j);
      w(i, j) = saved + h;
      const double up = ls_objective(w, v.prob, v.inst.x_img);
      w(i, j) = saved - h;
      const double down = ls_objective(w, v.prob, v.inst.x_img);
      w(i, j) = saved;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(g(i, j) - fd) / (1.0 + std::abs(fd)));
    }
    add("ls_gradient_fd", worst, 1e-5);
  }
  {
    GdConfig gd_cfg;
    gd_cfg.tol = 1e-12;
    UnifiedReport rep = verify_unified_framework(v.inst, 1.0, gd_cfg);
    add("closed_form_gd_direct", rep.err_direct_ft, 1e-6);
    double worst_l2 = rep.err_l2sp, worst_sd = rep.err_static_sd;
    for (double lam : cfg.lambda_grid) {
      UnifiedReport r = verify_unified_framework(v.inst, lam, gd_cfg);
      worst_l2 = std::max(worst_l2, r.err_l2sp);
      worst_sd = std::max(worst_sd, r.err_static_sd);
    }
    add("closed_form_gd_l2", worst_l2, 1e-6);
    add("closed_form_gd_sd", worst_sd, 1e-6);
  }
  {  // step inside the bound converges, 2.5/||Q|| diverges
    QuadProgram q = direct_ft_program(v.prob, v.inst.x_img);
    GdConfig stable;
    stable.step = cfg.gd_step_factor * max_step(q);
    stable.allow_unstable = true;
    stable.max_iters = 60000;
    GdResult ok = gd_solve(q, v.inst.w_img0, stable);

    GdConfig unstable;
    unstable.step = 2.5 / (q.scale_c * op_norm_gram(v.inst.x_img));
    unstable.allow_unstable = true;
    unstable.max_iters = 2000;
    GdResult bad = gd_solve(q, v.inst.w_img0, unstable);
    const bool diverged = !bad.converged &&
                          (!bad.w.allFinite() || bad.w.norm() > 1e6 * (1.0 + v.inst.w_img0.norm()));
    add("gd_stability", (ok.converged && diverged) ? 0.0 : 1.0, 0.5);
  }
  {
    const double lambda = 1.0;
    TimeGrid grid{200, 0.5, 1.0};
    SdwmaTrajectory traj = run_sdwma(v.prob, v.inst.w_img0, lambda,
                                     KernelSpec{BetaKernel{0.5, 0.5}}, grid, 1);
    double worst_contract = 0.0, worst_track = 0.0, worst_orth = 0.0;
    Mat orth0 = v.inst.w_img0 - v.inst.w_img0 * v.prob.p_i;
    double product = 1.0;
    for (std::size_t t = 1; t < traj.records.size(); ++t) {
      const auto& prev = traj.records[t - 1];
      const auto& cur = traj.records[t];
      product *= 1.0 - cur.omega / (1.0 + lambda);
      if (prev.err_teacher > 1e-8) {
        const double want = 1.0 - cur.omega / (1.0 + lambda);
        worst_contract = std::max(worst_contract,
                                  std::abs(cur.err_teacher / prev.err_teacher - want) / want);
      }
      Mat track = (cur.w_student - v.prob.w_star) * v.prob.p_i -
                  (lambda / (1.0 + lambda)) * ((prev.w_teacher - v.prob.w_star) * v.prob.p_i);
      worst_track = std::max(worst_track, track.norm() / (1.0 + prev.err_teacher));
      Mat orth = cur.w_student - cur.w_student * v.prob.p_i;
      worst_orth = std::max(worst_orth, (orth - orth0).norm() / (1.0 + v.inst.w_img0.norm()));
    }
    add("sdwma_contraction", worst_contract, 1e-9);
    add("sdwma_tracking", worst_track, 1e-10);
    add("sdwma_orthogonal_preservation", worst_orth, 1e-10);
    const double ratio = traj.back().err_teacher / traj.front().err_teacher;
    add("sdwma_product_formula", std::abs(ratio - product) / product, 1e-9);
  }
  {  // constant-omega kernel: the linear-rate bound is met at every step
    const double lambda = 1.0;
    const double omega_min = 0.05;
    TimeGrid grid{200, 0.5, 1.0};
    SdwmaTrajectory traj = run_sdwma(v.prob, v.inst.w_img0, lambda,
                                     KernelSpec{EmaEquivalentKernel{1.0 - omega_min, 1.0}}, grid, 1);
    double worst = 0.0;
    const double e0 = traj.front().err_teacher;
    for (std::size_t t = 1; t < traj.records.size(); ++t) {
      const double bound = std::pow(1.0 - omega_min / (1.0 + lambda), static_cast<double>(t)) * e0;
      worst = std::max(worst, traj.records[t].err_teacher / (bound * (1.0 + 1e-9)));
    }
    add("linear_rate_bound", worst, 1.0 + 1e-12);
  }
  {  // EmaEquivalent kernel reproduces the plain EMA recursion
    const double rho = 0.9;
    TimeGrid grid{100, 0.5, 1.0};
    TeacherState wma = TeacherState::init(v.inst.w_img0, KernelSpec{EmaEquivalentKernel{rho, 1.0}},
                                          grid);
    Mat ema = v.inst.w_img0;
    double worst = 0.0, worst_omega = 0.0;
    for (int t = 1; t <= grid.horizon_t; ++t) {
      Mat student = rng.gaussian(v.inst.w_img0.rows(), v.inst.w_img0.cols());
      wma = wma_update(wma, student);
      ema = ema_update(ema, student, rho);
      worst = std::max(worst, (wma.weights - ema).cwiseAbs().maxCoeff() /
                                  (1.0 + ema.cwiseAbs().maxCoeff()));
      worst_omega = std::max(worst_omega, std::abs(wma.last_omega - (1.0 - rho)));
    }
    add("ema_wma_equivalence", worst, 1e-12);
    add("ema_equivalent_omega_constant", worst_omega, 1e-12);
  }
  {  // implied history weights are a probability vector
    TimeGrid grid{50, 0.5, 1.0};
    KernelSpec kernel{BetaKernel{0.5, 0.5}};
    double mass = 0.0;
    std::vector<double> alphas;
    for (int k = 0; k <= grid.horizon_t; ++k) {
      alphas.push_back(kernel_eval(kernel, grid.tau(k), k));
      mass += alphas.back();
    }
    double sum = 0.0, min_w = 1.0;
    for (double a : alphas) {
      sum += a / mass;
      min_w = std::min(min_w, a / mass);
    }
    const double worst = std::max(std::abs(sum - 1.0), min_w < 0.0 ? 1.0 : 0.0);
    add("teacher_convexity", worst, 1e-12);
  }
  {  // finite-horizon persistence on monotone trajectories
    double worst_gap = -1.0, worst_grad = -1.0;
    Mat c_gram = v.prob.c_i;
    Mat u_raw = rng.gaussian(cfg.embed_dim, cfg.d_img) * c_gram;  // rows inside range(C)
    Mat u = u_raw / u_raw.norm();
    for (int horizon : {10, 100}) {
      for (int kind = 0; kind < 2; ++kind) {
        KernelSpec kernel = kind == 0 ? KernelSpec{UniformKernel{}}
                                      : KernelSpec{BetaKernel{0.5, 0.5}};
        TimeGrid grid{horizon, 0.5, 1.0};
        std::vector<double> a(static_cast<std::size_t>(horizon) + 1);
        for (int k = 0; k <= horizon; ++k)
          a[static_cast<std::size_t>(k)] = static_cast<double>(k) / horizon;
        PersistenceReport rep = persistence_check(v.inst.w_img0, u, a, kernel, grid, 1.0, c_gram);
        worst_gap = std::max(worst_gap, rep.gap_rhs - rep.gap_lhs);
        if (rep.gradient_bound_applicable)
          worst_grad = std::max(worst_grad, rep.grad_rhs - rep.grad_lhs);
      }
    }
    add("persistence_gap", worst_gap, 1e-12);
    add("persistence_gradient_bound", worst_grad, 1e-12);
  }
  {  // EMA teacher collapses on a convergent trajectory; WMA gap persists
    TimeGrid grid{200, 0.5, 1.0};
    SdwmaTrajectory traj = run_sdwma(v.prob, v.inst.w_img0, 1.0,
                                     KernelSpec{BetaKernel{0.5, 0.5}}, grid, 1);
    std::vector<Mat> students;
    for (const auto& r : traj.records) students.push_back(r.w_student);
    EmaGapReport ema = ema_gap_decay(students, cfg.ema_rho);
    const double first = ema.gaps.size() > 1 ? ema.gaps[1] : 0.0;
    add("ema_gap_vanishes", first > 0.0 ? ema.final_gap / first : 1.0, 0.1);

    const double wma_gap = (traj.back().w_teacher - traj.back().w_student).norm();
    double mass = 0.0;
    for (int k = 0; k <= grid.horizon_t; ++k)
      mass += kernel_eval(KernelSpec{BetaKernel{0.5, 0.5}}, grid.tau(k), k);
    const double omega0 = kernel_eval(KernelSpec{BetaKernel{0.5, 0.5}}, grid.tau(0), 0) / mass;
    const double bound = omega0 * (traj.back().w_student - v.inst.w_img0).norm();
    add("wma_gap_persists", bound > 0.0 ? 1.0 - wma_gap / bound : 1.0, 1e-9);
  }
  {
    DistillConfig dc;
    dc.tau = 1.0;
    add("distill_gradcheck_tau1", distill_grad_check(dc, 4, 8, seed, 1e-5).max_rel_err, 1e-4);
    dc.tau = 0.07;
    add("distill_gradcheck_tau007", distill_grad_check(dc, 4, 8, seed, 1e-6).max_rel_err, 1e-4);
  }
  {
    double worst = std::abs(kernel_eval(KernelSpec{BetaKernel{1.0, 1.0}}, 0.3, 0) - 1.0);
    worst = std::max(worst, std::abs(kernel_eval(KernelSpec{BetaKernel{0.5, 0.5}}, 0.5, 0) - 2.0));
    worst = std::max(worst,
                     std::abs(kernel_eval(KernelSpec{EmaEquivalentKernel{0.9, 1.0}}, 0.5, 1) -
                              (1.0 - 0.9) / 0.9));
    add("kernel_reference_values", worst, 1e-12);
  }
  return checks;
}

}  // namespace

int cmd_verify(const RunConfig& cfg) {
  if (cfg.seeds.empty()) {
    std::cerr << "verify: empty seed list\n";
    return kExitUsage;
  }
  ordered_json report;
  report["command"] = "verify";
  report["config"] = {{"d_img", cfg.d_img},   {"n_batch", cfg.n_batch},
                      {"embed_dim", cfg.embed_dim}, {"d_txt", cfg.d_txt},
                      {"gd_step_factor", cfg.gd_step_factor}};
  bool all_pass = true;
  ordered_json runs = ordered_json::array();
  for (std::uint64_t seed : cfg.seeds) {
    std::vector<Check> checks = run_verify_checks(cfg, seed);
    ordered_json block;
    block["seed"] = seed;
    bool seed_pass = true;
    ordered_json list = ordered_json::array();
    for (const auto& c : checks) {
      list.push_back({{"name", c.name},
                      {"pass", c.pass},
                      {"measured", c.measured},
                      {"threshold", c.threshold}});
      if (!c.pass) {
        seed_pass = false;
        std::cerr << "verify: FAILED " << c.name << " (seed " << seed
                  << ", measured " << format_sig(c.measured) << ", threshold "
                  << format_sig(c.threshold) << ")\n";
      }
    }
    block["checks"] = std::move(list);
    block["all_pass"] = seed_pass;
    runs.push_back(std::move(block));
    all_pass = all_pass && seed_pass;
    std::cout << "verify: seed " << seed << ": " << checks.size() << " checks, "
              << (seed_pass ? "all passed" : "FAILURES above") << "\n";
  }
  report["runs"] = std::move(runs);
  report["all_pass"] = all_pass;

  const std::string path = cfg.out.empty() ? "verify_report.json" : cfg.out;
  write_file(path, report.dump(2) + "\n");
  std::cout << "verify: report written to " << path << "\n";
  return all_pass ? kExitOk : kExitCheckFailed;
}

namespace {

StrategyRun make_run(const RunConfig& cfg, StrategyKind kind) {
  StrategyRun run;
  run.strategy = kind;
  run.lambda = cfg.toy_lambda;
  if (kind == StrategyKind::TracerToy) run.kernel = KernelSpec{BetaKernel{0.5, 0.5}};
  run.dsd_horizon = cfg.dsd_horizon;
  run.update_every = cfg.update_freq;
  run.tracer_iters = cfg.tracer_iters;
  run.tracer_batch = cfg.tracer_batch;
  run.ema_rho = cfg.ema_rho;
  run.distill.tau = cfg.tau;
  run.distill.lambda_sd = cfg.lambda_sd;
  return run;
}

double parallel_drift(const Mat& w, const Mat& w0, const Mat& p_i) {
  return ((w - w0) * p_i).norm();
}

}  // namespace

int cmd_sweep(const RunConfig& cfg) {
  if (cfg.seeds.empty()) {
    std::cerr << "sweep: empty seed list\n";
    return kExitUsage;
  }
  enum class Axis { Lambda, Beta, UpdateFreq } axis;
  if (cfg.sweep_axis == "lambda") axis = Axis::Lambda;
  else if (cfg.sweep_axis == "beta") axis = Axis::Beta;
  else if (cfg.sweep_axis == "update-freq") axis = Axis::UpdateFreq;
  else {
    std::cerr << "sweep: unknown axis '" << cfg.sweep_axis << "'\n";
    return kExitUsage;
  }
  const std::size_t grid_size = axis == Axis::Lambda ? cfg.lambda_grid.size()
                              : axis == Axis::Beta ? cfg.beta_grid.size()
                                                   : cfg.update_freq_grid.size();
  if (grid_size == 0) {
    std::cerr << "sweep: empty grid for axis '" << cfg.sweep_axis << "'\n";
    return kExitUsage;
  }

  CsvBuilder csv;
  csv.comment("linft sweep over axis=" + cfg.sweep_axis +
              "; columns: axis,value,seed,strategy,acc_original,acc_new,forgetting,"
              "dist_parallel,omega0_final");
  csv.row({"axis", "value", "seed", "strategy", "acc_original", "acc_new", "forgetting",
           "dist_parallel", "omega0_final"});

  for (std::uint64_t seed : cfg.seeds) {
    SyntheticTask task = cfg.task;
    task.seed = seed;
    GeneratedTasks tasks = generate_tasks(task);
    Mat pre = pretrain_linear(tasks);

    FinetuneInstance inst{tasks.finetune.x_img, tasks.finetune.x_txt, pre, tasks.w_txt0, 0.0};
    TargetProblem prob = TargetProblem::build(inst);

    auto emit = [&](double value, StrategyKind kind, const StrategyRun& run,
                    double omega0_final) {
      RunMetrics m = run_strategy(run, tasks, pre);
      Mat w;  // recompute the final weights for the drift column
      switch (kind) {
        case StrategyKind::StaticSD: w = solve_static_sd(prob, pre, run.lambda).weights; break;
        case StrategyKind::DynamicSD: {
          KernelSpec kernel =
              run.kernel.value_or(KernelSpec{EmaEquivalentKernel{run.ema_rho, 1.0}});
          SdwmaTrajectory traj = run_sdwma(prob, pre, run.lambda, kernel,
                                           TimeGrid{run.dsd_horizon, 0.5, 1.0}, run.update_every);
          w = traj.back().w_student;
          break;
        }
        default: w = pre; break;
      }
      csv.row({cfg.sweep_axis, format_sig(value), std::to_string(seed),
               strategy_kind_name(kind), format_sig(m.acc_original), format_sig(m.acc_new),
               format_sig(m.forgetting), format_sig(parallel_drift(w, pre, prob.p_i)),
               format_sig(omega0_final)});
    };

    if (axis == Axis::Lambda) {
      for (double lam : cfg.lambda_grid) {
        for (StrategyKind kind : {StrategyKind::StaticSD, StrategyKind::DynamicSD}) {
          StrategyRun run = make_run(cfg, kind);
          run.lambda = lam;
          emit(lam, kind, run, 0.0);
        }
      }
    } else if (axis == Axis::Beta) {
      for (double beta : cfg.beta_grid) {
        StrategyRun run = make_run(cfg, StrategyKind::DynamicSD);
        run.kernel = KernelSpec{BetaKernel{beta, beta}};
        TimeGrid grid{run.dsd_horizon, 0.5, 1.0};
        double mass = 0.0;
        for (int k = 0; k <= grid.horizon_t; ++k)
          mass += kernel_eval(*run.kernel, grid.tau(k), k);
        const double omega0 = kernel_eval(*run.kernel, grid.tau(0), 0) / mass;
        emit(beta, StrategyKind::DynamicSD, run, omega0);
      }
    } else {
      for (int freq : cfg.update_freq_grid) {
        StrategyRun run = make_run(cfg, StrategyKind::DynamicSD);
        run.update_every = freq;
        emit(static_cast<double>(freq), StrategyKind::DynamicSD, run, 0.0);
      }
    }
  }

  const std::string path = cfg.out.empty() ? "sweep.csv" : cfg.out;
  write_file(path, csv.str());
  std::cout << "sweep: written to " << path << "\n";
  return kExitOk;
}

int cmd_toy(const RunConfig& cfg) {
  if (cfg.seeds.empty()) {
    std::cerr << "toy: empty seed list\n";
    return kExitUsage;
  }
  const StrategyKind kinds[] = {StrategyKind::Pretrained, StrategyKind::DirectFT,
                                StrategyKind::L2Reg,      StrategyKind::StaticSD,
                                StrategyKind::DynamicSD,  StrategyKind::TracerToy};

  CsvBuilder csv;
  csv.comment("linft toy experiment; columns: strategy,seed,acc_original,acc_new,forgetting,"
              "teacher_gap_wma,teacher_gap_ema");
  csv.row({"strategy", "seed", "acc_original", "acc_new", "forgetting", "teacher_gap_wma",
           "teacher_gap_ema"});

  std::map<StrategyKind, std::vector<RunMetrics>> collected;
  for (StrategyKind kind : kinds) {
    for (std::uint64_t seed : cfg.seeds) {
      SyntheticTask task = cfg.task;
      task.seed = seed;
      GeneratedTasks tasks = generate_tasks(task);
      Mat pre = pretrain_linear(tasks);
      RunMetrics m = run_strategy(make_run(cfg, kind), tasks, pre);
      collected[kind].push_back(m);
      csv.row({strategy_kind_name(kind), std::to_string(seed), format_sig(m.acc_original),
               format_sig(m.acc_new), format_sig(m.forgetting), format_sig(m.teacher_gap_wma),
               format_sig(m.teacher_gap_ema)});
    }
  }

  auto mean_of = [&](StrategyKind kind, auto field) {
    const auto& rows = collected[kind];
    double sum = 0.0;
    for (const auto& m : rows) sum += field(m);
    return sum / static_cast<double>(rows.size());
  };
  auto acc_orig = [](const RunMetrics& m) { return m.acc_original; };
  auto acc_new = [](const RunMetrics& m) { return m.acc_new; };
  auto forget = [](const RunMetrics& m) { return m.forgetting; };

  ordered_json summary;
  summary["command"] = "toy";
  summary["seeds"] = cfg.seeds;
  ordered_json per_strategy = ordered_json::array();
  std::vector<std::pair<StrategyKind, RunMetrics>> mean_runs;
  for (StrategyKind kind : kinds) {
    RunMetrics mean;
    mean.acc_original = mean_of(kind, acc_orig);
    mean.acc_new = mean_of(kind, acc_new);
    mean.forgetting = mean_of(kind, forget);
    mean_runs.emplace_back(kind, mean);
    per_strategy.push_back({{"strategy", strategy_kind_name(kind)},
                            {"acc_original_mean", mean.acc_original},
                            {"acc_new_mean", mean.acc_new},
                            {"forgetting_mean", mean.forgetting}});
  }
  summary["per_strategy"] = std::move(per_strategy);

  const double f_ft = mean_of(StrategyKind::DirectFT, forget);
  const double f_l2 = mean_of(StrategyKind::L2Reg, forget);
  const double f_ssd = mean_of(StrategyKind::StaticSD, forget);
  const double f_dsd = mean_of(StrategyKind::DynamicSD, forget);
  summary["ordering"] = {{"direct_ft_gt_l2", f_ft > f_l2},
                         {"l2_gt_static_sd", f_l2 > f_ssd},
                         {"static_sd_ge_dynamic_sd", f_ssd >= f_dsd}};

  const double ft_new = mean_of(StrategyKind::DirectFT, acc_new);
  double min_ratio = 1.0;
  for (StrategyKind kind : {StrategyKind::L2Reg, StrategyKind::StaticSD, StrategyKind::DynamicSD,
                            StrategyKind::TracerToy}) {
    min_ratio = std::min(min_ratio, mean_of(kind, acc_new) / ft_new);
  }
  summary["min_acc_new_ratio_vs_direct_ft"] = min_ratio;

  ordered_json pareto = ordered_json::array();
  for (const auto& row : pareto_table(mean_runs)) {
    pareto.push_back({{"strategy", strategy_kind_name(row.strategy)},
                      {"acc_original", row.acc_original},
                      {"acc_new", row.acc_new},
                      {"forgetting", row.forgetting},
                      {"pareto_optimal", row.pareto_optimal}});
  }
  summary["pareto"] = std::move(pareto);

  const std::string csv_path = cfg.out.empty() ? "toy_metrics.csv" : cfg.out;
  std::string summary_path = csv_path;
  const auto dot = summary_path.rfind(".csv");
  if (dot != std::string::npos && dot == summary_path.size() - 4)
    summary_path = summary_path.substr(0, dot);
  summary_path += "_summary.json";

  write_file(csv_path, csv.str());
  write_file(summary_path, summary.dump(2) + "\n");
  std::cout << "toy: metrics written to " << csv_path << ", summary to " << summary_path << "\n";
  return kExitOk;
}

int cmd_teacher_dynamics(const RunConfig& cfg) {
  if (cfg.seeds.empty()) {
    std::cerr << "teacher-dynamics: empty seed list\n";
    return kExitUsage;
  }
  CsvBuilder csv;
  csv.comment("linft teacher dynamics; columns: seed,step,omega,err_teacher,err_student,"
              "gap_teacher_student,gap_ema,contraction");
  csv.row({"seed", "step", "omega", "err_teacher", "err_student", "gap_teacher_student",
           "gap_ema", "contraction"});

  for (std::uint64_t seed : cfg.seeds) {
    SyntheticTask task = cfg.task;
    task.seed = seed;
    GeneratedTasks tasks = generate_tasks(task);
    Mat pre = pretrain_linear(tasks);
    FinetuneInstance inst{tasks.finetune.x_img, tasks.finetune.x_txt, pre, tasks.w_txt0, 0.0};
    TargetProblem prob = TargetProblem::build(inst);

    TimeGrid grid{cfg.dynamics_horizon, 0.5, 1.0};
    SdwmaTrajectory traj = run_sdwma(prob, pre, cfg.toy_lambda, KernelSpec{BetaKernel{0.5, 0.5}},
                                     grid, cfg.update_freq);
    std::vector<Mat> students;
    for (const auto& r : traj.records) students.push_back(r.w_student);
    EmaGapReport ema = ema_gap_decay(students, cfg.ema_rho);

    for (std::size_t t = 0; t < traj.records.size(); ++t) {
      const auto& r = traj.records[t];
      const double contraction =
          t > 0 && traj.records[t - 1].err_teacher > 1e-14
              ? r.err_teacher / traj.records[t - 1].err_teacher
              : 0.0;
      csv.row({std::to_string(seed), std::to_string(r.step), format_sig(r.omega),
               format_sig(r.err_teacher), format_sig(r.err_student),
               format_sig((r.w_teacher - r.w_student).norm()), format_sig(ema.gaps[t]),
               format_sig(contraction)});
    }
  }

  const std::string path = cfg.out.empty() ? "teacher_dynamics.csv" : cfg.out;
  write_file(path, csv.str());
  std::cout << "teacher-dynamics: written to " << path << "\n";
  return kExitOk;
}

}  // namespace linft
