#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "linft/gd.hpp"
#include "linft/teacher.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <vector>

using namespace linft;

TEST_CASE("kernel reference values") {
  CHECK(kernel_eval(KernelSpec{BetaKernel{1.0, 1.0}}, 0.37, 0) == doctest::Approx(1.0));
  CHECK(kernel_eval(KernelSpec{BetaKernel{0.5, 0.5}}, 0.5, 0) == doctest::Approx(2.0));
  CHECK(kernel_eval(KernelSpec{UniformKernel{}}, 0.9, 3) == doctest::Approx(1.0));
  CHECK(kernel_eval(KernelSpec{EmaEquivalentKernel{0.9, 1.0}}, 0.1, 1) ==
        doctest::Approx(0.1 / 0.9));
  CHECK(kernel_eval(KernelSpec{EmaEquivalentKernel{0.9, 2.0}}, 0.1, 0) == doctest::Approx(2.0));
}

TEST_CASE("beta kernel rejects endpoint evaluation") {
  CHECK_THROWS_AS(kernel_eval(KernelSpec{BetaKernel{0.5, 0.5}}, 0.0, 0), std::domain_error);
  CHECK_THROWS_AS(kernel_eval(KernelSpec{BetaKernel{0.5, 0.5}}, 1.0, 0), std::domain_error);
}

TEST_CASE("time grid keeps tau strictly interior") {
  TimeGrid grid{500, 0.5, 1.0};
  grid.validate();
  CHECK(grid.tau(0) > 0.0);
  CHECK(grid.tau(500) < 1.0);
  TimeGrid bad{10, 2.0, 1.0};  // tau(10) = 12/11 > 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("uniform kernel gives the running mean") {
  Rng rng(90);
  TimeGrid grid{12, 0.5, 1.0};
  TeacherState st = TeacherState::init(rng.gaussian(3, 4), KernelSpec{UniformKernel{}}, grid);
  std::vector<Mat> history{st.weights};
  for (int t = 1; t <= grid.horizon_t; ++t) {
    Mat w = rng.gaussian(3, 4);
    history.push_back(w);
    st = wma_update(st, w);
    Mat mean = Mat::Zero(3, 4);
    for (const Mat& h : history) mean += h;
    mean /= static_cast<double>(history.size());
    CHECK((st.weights - mean).norm() < 1e-12 * (1.0 + mean.norm()));
    CHECK(st.last_omega == doctest::Approx(1.0 / static_cast<double>(t + 1)));
  }
}

TEST_CASE("constant student is a fixed point of the teacher") {
  Mat c = mat_from({{1, 2}, {3, 4}});
  TimeGrid grid{20, 0.5, 1.0};
  TeacherState st = TeacherState::init(c, KernelSpec{BetaKernel{0.5, 0.5}}, grid);
  for (int t = 1; t <= grid.horizon_t; ++t) {
    st = wma_update(st, c);
    CHECK((st.weights - c).norm() < 1e-13);
  }
}

TEST_CASE("teacher updates stop at the grid horizon") {
  Mat w = Mat::Zero(2, 2);
  TimeGrid grid{2, 0.5, 1.0};
  TeacherState st = TeacherState::init(w, KernelSpec{UniformKernel{}}, grid);
  st = wma_update(st, w);
  st = wma_update(st, w);
  CHECK_THROWS_AS(wma_update(st, w), std::invalid_argument);
}

TEST_CASE("ema reference cases") {
  Mat teacher = Mat::Zero(1, 1);
  Mat student = mat_from({{2}});
  CHECK(ema_update(teacher, student, 0.5)(0, 0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(ema_update(teacher, student, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ema_update(teacher, student, 1.0), std::invalid_argument);
}

TEST_CASE("ema decays geometrically toward a constant student") {
  Rng rng(91);
  const double rho = 0.8;
  Mat c = rng.gaussian(3, 3);
  Mat teacher = rng.gaussian(3, 3);
  const double gap0 = (teacher - c).norm();
  for (int t = 1; t <= 50; ++t) {
    teacher = ema_update(teacher, c, rho);
    CHECK((teacher - c).norm() == doctest::Approx(std::pow(rho, t) * gap0).epsilon(1e-9));
  }
}

TEST_CASE("EmaEquivalent kernel reproduces the ema recursion") {
  Rng rng(92);
  const double rho = 0.9;
  TimeGrid grid{100, 0.5, 1.0};
  Mat w0 = rng.gaussian(4, 5);
  TeacherState wma = TeacherState::init(w0, KernelSpec{EmaEquivalentKernel{rho, 1.0}}, grid);
  Mat ema = w0;
  for (int t = 1; t <= grid.horizon_t; ++t) {
    Mat student = rng.gaussian(4, 5);
    wma = wma_update(wma, student);
    ema = ema_update(ema, student, rho);
    CHECK((wma.weights - ema).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + ema.cwiseAbs().maxCoeff()));
    CHECK(std::abs(wma.last_omega - (1.0 - rho)) < 1e-12);
  }
}

TEST_CASE("sdwma_step reference behavior") {
  Rng rng(93);
  FinetuneInstance inst = testing::random_instance(rng, 8, 4, 4, 3);
  TargetProblem prob = TargetProblem::build(inst);

  // Teacher already on the task optimum: student parallel part lands on it.
  Mat teacher = prob.w_star + rng.gaussian(4, 8) * (Mat::Identity(8, 8) - prob.p_i);
  Mat next = sdwma_step(prob, inst.w_img0, teacher, 1.0);
  CHECK(((next - prob.w_star) * prob.p_i).norm() < 1e-9 * (1.0 + prob.w_star.norm()));

  // lambda = 1 is the midpoint mix in the parallel subspace.
  Mat teacher2 = rng.gaussian(4, 8);
  Mat next2 = sdwma_step(prob, inst.w_img0, teacher2, 1.0);
  Mat want_par = 0.5 * (teacher2 * prob.p_i) + 0.5 * prob.w_star;
  CHECK((next2 * prob.p_i - want_par).norm() < 1e-10 * (1.0 + want_par.norm()));
}

TEST_CASE("sdwma_step agrees with gradient descent on the step objective") {
  Rng rng(94);
  FinetuneInstance inst = testing::random_instance(rng, 8, 4, 4, 3);
  TargetProblem prob = TargetProblem::build(inst);
  const double lambda = 1.7;
  Mat teacher = rng.gaussian(4, 8);
  Mat student_prev = rng.gaussian(4, 8);

  Mat direct = sdwma_step(prob, student_prev, teacher, lambda);

  QuadProgram q = static_sd_program(prob, inst.x_img, teacher, lambda);
  GdConfig cfg;
  cfg.step = max_step(q);
  GdResult gd = gd_solve(q, student_prev, cfg);
  CHECK(gd.converged);
  CHECK(testing::rel_err(gd.w, direct) < 1e-7);
}

TEST_CASE("full-weight update contracts the teacher error by 1/(1+lambda)") {
  Rng rng(95);
  FinetuneInstance inst = testing::random_instance(rng, 8, 4, 4, 3);
  TargetProblem prob = TargetProblem::build(inst);
  const double lambda = 1.0;

  // Hand-built state entering its first update with zero accumulated mass:
  // omega becomes exactly 1 (the teacher adopts the student wholly).
  TeacherState st;
  st.weights = inst.w_img0;
  st.cumulative_alpha = 0.0;
  st.step = 0;
  st.kernel = KernelSpec{UniformKernel{}};
  st.grid = TimeGrid{4, 0.5, 1.0};

  Mat student = sdwma_step(prob, inst.w_img0, st.weights, lambda);
  TeacherState next = wma_update(st, student);
  CHECK(next.last_omega == doctest::Approx(1.0));
  const double e_prev = ((st.weights - prob.w_star) * prob.p_i).norm();
  const double e_next = ((next.weights - prob.w_star) * prob.p_i).norm();
  CHECK(e_next == doctest::Approx(0.5 * e_prev).epsilon(1e-9));
}

TEST_CASE("run_sdwma satisfies the exact per-step identities") {
  Rng rng(96);
  FinetuneInstance inst = testing::random_instance(rng, 8, 4, 4, 3);
  TargetProblem prob = TargetProblem::build(inst);
  const double lambda = 1.0;
  TimeGrid grid{300, 0.5, 1.0};
  SdwmaTrajectory traj = run_sdwma(prob, inst.w_img0, lambda, KernelSpec{BetaKernel{0.5, 0.5}},
                                   grid, 1);
  REQUIRE(traj.records.size() == 301);

  Mat eye = Mat::Identity(8, 8);
  Mat orth0 = inst.w_img0 * (eye - prob.p_i);
  for (std::size_t t = 1; t < traj.records.size(); ++t) {
    const auto& prev = traj.records[t - 1];
    const auto& cur = traj.records[t];
    if (prev.err_teacher > 1e-8) {
      const double want = 1.0 - cur.omega / (1.0 + lambda);
      CHECK(cur.err_teacher / prev.err_teacher == doctest::Approx(want).epsilon(1e-9));
    }
    Mat track = (cur.w_student - prob.w_star) * prob.p_i -
                0.5 * ((prev.w_teacher - prob.w_star) * prob.p_i);
    CHECK(track.norm() < 1e-10 * (1.0 + prev.err_teacher));
    CHECK((cur.w_student * (eye - prob.p_i) - orth0).norm() < 1e-10 * (1.0 + inst.w_img0.norm()));
    CHECK(cur.err_teacher <= prev.err_teacher + 1e-12);
  }
}

TEST_CASE("run_sdwma error ratio equals the contraction product") {
  Rng rng(97);
  FinetuneInstance inst = testing::random_instance(rng, 8, 4, 4, 3);
  TargetProblem prob = TargetProblem::build(inst);
  TimeGrid grid{500, 0.5, 1.0};
  SdwmaTrajectory traj = run_sdwma(prob, inst.w_img0, 1.0, KernelSpec{BetaKernel{0.5, 0.5}},
                                   grid, 1);
  double product = 1.0;
  for (std::size_t t = 1; t < traj.records.size(); ++t)
    product *= 1.0 - traj.records[t].omega / 2.0;
  const double ratio = traj.back().err_teacher / traj.front().err_teacher;
  CHECK(ratio == doctest::Approx(product).epsilon(1e-9));
  // The arcsine kernel keeps a pinned share on the initialization, so the
  // finite-horizon ratio stays well above zero while still contracting.
  CHECK(ratio < 0.5);
  CHECK(ratio > 0.01);
}

TEST_CASE("dynamic teacher beats the static anchor bias") {
  Rng rng(98);
  FinetuneInstance inst = testing::random_instance(rng, 8, 4, 4, 3);
  TargetProblem prob = TargetProblem::build(inst);
  const double lambda = 1.0;
  TimeGrid grid{500, 0.5, 1.0};
  SdwmaTrajectory traj = run_sdwma(prob, inst.w_img0, lambda, KernelSpec{BetaKernel{0.5, 0.5}},
                                   grid, 1);
  const double static_bias = anchor_bias(prob, inst.w_img0, lambda).norm();
  CHECK(traj.back().err_student < static_bias);
}

TEST_CASE("sparse teacher updates hold the teacher constant between refreshes") {
  Rng rng(99);
  FinetuneInstance inst = testing::random_instance(rng, 8, 4, 4, 3);
  TargetProblem prob = TargetProblem::build(inst);
  TimeGrid grid{20, 0.5, 1.0};
  SdwmaTrajectory traj = run_sdwma(prob, inst.w_img0, 1.0, KernelSpec{BetaKernel{0.5, 0.5}},
                                   grid, 5);
  for (std::size_t t = 1; t < traj.records.size(); ++t) {
    if (traj.records[t].step % 5 != 0) {
      CHECK(traj.records[t].omega == 0.0);
      CHECK((traj.records[t].w_teacher - traj.records[t - 1].w_teacher).norm() == 0.0);
    } else {
      CHECK(traj.records[t].omega > 0.0);
    }
  }
}

TEST_CASE("linear rate bound under a constant step weight") {
  Rng rng(100);
  FinetuneInstance inst = testing::random_instance(rng, 8, 4, 4, 3);
  TargetProblem prob = TargetProblem::build(inst);
  const double lambda = 1.0, omega_min = 0.05;
  TimeGrid grid{400, 0.5, 1.0};
  SdwmaTrajectory traj = run_sdwma(prob, inst.w_img0, lambda,
                                   KernelSpec{EmaEquivalentKernel{1.0 - omega_min, 1.0}}, grid, 1);
  const double e0 = traj.front().err_teacher;
  for (std::size_t t = 1; t < traj.records.size(); ++t) {
    const double bound = std::pow(1.0 - omega_min / (1.0 + lambda), static_cast<double>(t)) * e0;
    CHECK(traj.records[t].err_teacher <= bound * (1.0 + 1e-9));
  }
}

TEST_CASE("persistence trivial and two-point cases") {
  Rng rng(101);
  Mat w0 = rng.gaussian(3, 4);
  Mat u = rng.gaussian(3, 4);
  u /= u.norm();
  Mat c_gram = Mat::Identity(4, 4);

  // Student never moves: both sides zero.
  TimeGrid grid1{4, 0.5, 1.0};
  std::vector<double> frozen(5, 0.0);
  PersistenceReport rep0 = persistence_check(w0, u, frozen, KernelSpec{UniformKernel{}}, grid1,
                                             1.0, c_gram);
  CHECK(rep0.gap_lhs == doctest::Approx(0.0));
  CHECK(rep0.gap_rhs == doctest::Approx(0.0));

  // Two-point trajectory with the uniform kernel: teacher is the midpoint.
  TimeGrid grid2{1, 0.5, 1.0};
  PersistenceReport rep1 = persistence_check(w0, u, {0.0, 1.0}, KernelSpec{UniformKernel{}},
                                             grid2, 1.0, c_gram);
  CHECK(rep1.gap_lhs == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep1.omega0_final == doctest::Approx(0.5));
  CHECK(rep1.gap_rhs == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("persistence inequality is strict on spread trajectories") {
  Rng rng(102);
  Mat w0 = rng.gaussian(3, 5);
  FinetuneInstance inst = testing::random_instance(rng, 5, 3, 3, 3);
  TargetProblem prob = TargetProblem::build(inst);
  Mat u = rng.gaussian(3, 5) * prob.c_i;  // rows inside range(C)
  u /= u.norm();

  const int horizon = 100;
  TimeGrid grid{horizon, 0.5, 1.0};
  std::vector<double> a(horizon + 1);
  for (int k = 0; k <= horizon; ++k) a[static_cast<std::size_t>(k)] = static_cast<double>(k) / horizon;

  for (const KernelSpec& kernel :
       {KernelSpec{BetaKernel{0.5, 0.5}}, KernelSpec{UniformKernel{}}}) {
    PersistenceReport rep = persistence_check(w0, u, a, kernel, grid, 2.0, prob.c_i);
    CHECK(rep.gap_lhs > rep.gap_rhs);
    CHECK(rep.gap_rhs > 0.0);
    CHECK(rep.gradient_bound_applicable);
    CHECK(rep.grad_lhs >= rep.grad_rhs - 1e-12);
  }
}

TEST_CASE("persistence validates its trajectory") {
  Rng rng(103);
  Mat w0 = rng.gaussian(2, 3);
  Mat u = rng.gaussian(2, 3);
  u /= u.norm();
  TimeGrid grid{2, 0.5, 1.0};
  Mat c = Mat::Identity(3, 3);
  CHECK_THROWS_AS(persistence_check(w0, u, {0.0, 1.0, 0.5}, KernelSpec{UniformKernel{}}, grid,
                                    1.0, c),
                  std::invalid_argument);
  CHECK_THROWS_AS(persistence_check(w0, 2.0 * u, {0.0, 0.5, 1.0}, KernelSpec{UniformKernel{}},
                                    grid, 1.0, c),
                  std::invalid_argument);
}

TEST_CASE("gradient bound is skipped when the direction leaves the range") {
  Rng rng(104);
  Mat w0 = rng.gaussian(2, 3);
  Mat c = Mat::Zero(3, 3);
  c(0, 0) = 1.0;  // range = e1
  Mat u = Mat::Zero(2, 3);
  u(0, 2) = 1.0;  // motion along e3
  TimeGrid grid{2, 0.5, 1.0};
  PersistenceReport rep = persistence_check(w0, u, {0.0, 0.5, 1.0}, KernelSpec{UniformKernel{}},
                                            grid, 1.0, c);
  CHECK_FALSE(rep.gradient_bound_applicable);
  CHECK(rep.gap_lhs >= rep.gap_rhs - 1e-12);
}

TEST_CASE("ema gap vanishes on convergent trajectories, wma gap persists") {
  Rng rng(105);
  Mat a = rng.gaussian(3, 4);

  // Constant trajectory: the gap is identically zero.
  std::vector<Mat> constant(30, a);
  EmaGapReport rep_const = ema_gap_decay(constant, 0.9);
  for (double g : rep_const.gaps) CHECK(g == doctest::Approx(0.0));

  // W^t = (1 - 2^-t) A converges geometrically; the EMA gap dies with it.
  const int horizon = 40;
  std::vector<Mat> traj;
  for (int t = 0; t <= horizon; ++t)
    traj.push_back((1.0 - std::pow(2.0, -t)) * a);
  EmaGapReport rep = ema_gap_decay(traj, 0.5);
  CHECK(rep.final_gap < 1e-9);

  // The WMA teacher over the same trajectory keeps a pinned share on the
  // initial point, so its final gap stays bounded away from zero.
  TimeGrid grid{horizon, 0.5, 1.0};
  KernelSpec kernel{BetaKernel{0.5, 0.5}};
  TeacherState st = TeacherState::init(traj.front(), kernel, grid);
  for (int t = 1; t <= horizon; ++t) st = wma_update(st, traj[static_cast<std::size_t>(t)]);
  double mass = 0.0;
  for (int k = 0; k <= horizon; ++k) mass += kernel_eval(kernel, grid.tau(k), k);
  const double omega0 = kernel_eval(kernel, grid.tau(0), 0) / mass;
  const double lower = omega0 * (traj.back() - traj.front()).norm();
  CHECK((st.weights - traj.back()).norm() >= lower - 1e-12);
  CHECK(lower > 0.0);
}

TEST_CASE("ema gap at a fixed step grows with rho") {
  Rng rng(106);
  Mat a = rng.gaussian(3, 4);
  const int horizon = 30;
  std::vector<Mat> traj;
  for (int t = 0; t <= horizon; ++t) traj.push_back((1.0 - std::pow(2.0, -t)) * a);
  double prev = -1.0;
  for (double rho : {0.5, 0.9, 0.99}) {
    EmaGapReport rep = ema_gap_decay(traj, rho);
    CHECK(rep.final_gap > prev);
    prev = rep.final_gap;
  }
}

TEST_CASE("implied history weights stay a probability vector") {
  TimeGrid grid{60, 0.5, 1.0};
  for (const KernelSpec& kernel : {KernelSpec{BetaKernel{0.5, 0.5}}, KernelSpec{BetaKernel{1.5, 1.5}},
                                   KernelSpec{UniformKernel{}}}) {
    double mass = 0.0;
    std::vector<double> alphas;
    for (int k = 0; k <= grid.horizon_t; ++k) {
      alphas.push_back(kernel_eval(kernel, grid.tau(k), k));
      CHECK(alphas.back() > 0.0);
      mass += alphas.back();
    }
    double sum = 0.0;
    for (double alpha : alphas) sum += alpha / mass;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}
