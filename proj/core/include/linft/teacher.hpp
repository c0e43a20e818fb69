#pragma once

#include "linft/objective.hpp"

#include <variant>
#include <vector>

namespace linft {

/// Normalized-time weighting kernels. Beta densities are unnormalized
/// (tau^(b1-1) (1-tau)^(b2-1)); the online normalization cancels any global
/// constant. EmaEquivalent reproduces the constant-omega EMA recursion.
struct BetaKernel {
  double beta1 = 0.5;
  double beta2 = 0.5;
};
struct UniformKernel {};
struct EmaEquivalentKernel {
  double rho = 0.9;     // in (0,1)
  double alpha0 = 1.0;  // free positive scale
};
using KernelSpec = std::variant<BetaKernel, UniformKernel, EmaEquivalentKernel>;

/// Normalized time tau_k = (k + c1)/(T + c2), kept strictly inside (0,1) so
/// endpoint-divergent kernels stay finite.
struct TimeGrid {
  int horizon_t = 1;
  double c1 = 0.5;
  double c2 = 1.0;

  double tau(int k) const { return (static_cast<double>(k) + c1) / (static_cast<double>(horizon_t) + c2); }
  void validate() const;
};

/// Kernel value alpha_k. For Beta/Uniform kernels only tau matters; the
/// EmaEquivalent kernel is indexed by the step: alpha_0 at step 0 and
/// ((1-rho)/rho^t) alpha_0 afterwards, which makes every omega_t = 1-rho.
double kernel_eval(const KernelSpec& kernel, double tau, int step);

/// Teacher weights plus the running kernel mass. Updates are value-style:
/// wma_update returns the successor state.
struct TeacherState {
  Mat weights;
  double cumulative_alpha = 0.0;
  int step = 0;
  double last_omega = 1.0;  // omega used by the most recent update (1 at init)
  KernelSpec kernel;
  TimeGrid grid;

  /// Teacher starts at the student's initial weights, carrying alpha_0.
  static TeacherState init(Mat w0, KernelSpec kernel, TimeGrid grid);
};

/// One online WMA update: omega_t = alpha_t / sum_{j<=t} alpha_j and
/// weights <- (1-omega_t) weights + omega_t w_student.
TeacherState wma_update(const TeacherState& state, const Mat& w_student);

/// Plain EMA step rho * teacher + (1-rho) * student, rho in (0,1).
Mat ema_update(const Mat& w_teacher, const Mat& w_student, double rho);

/// Exact minimizer of the step-t objective
///   1/2 ||W X - Y||^2 + lambda/2 ||W X - W_teacher X||^2
/// started from the previous student: orthogonal part copied from the
/// student, parallel part the convex mix of teacher and task optimum.
Mat sdwma_step(const TargetProblem& prob, const Mat& w_student_prev,
               const Mat& w_teacher_prev, double lambda);

struct SdwmaRecord {
  int step = 0;
  Mat w_student;
  Mat w_teacher;
  double omega = 0.0;        // 0 on steps where the teacher is held
  double err_teacher = 0.0;  // ||(W_teacher - W*) P||_F
  double err_student = 0.0;  // ||(W_student - W*) P||_F
};

struct SdwmaTrajectory {
  std::vector<SdwmaRecord> records;  // records[0] is the initial state

  const SdwmaRecord& front() const { return records.front(); }
  const SdwmaRecord& back() const { return records.back(); }
};

/// Alternates sdwma_step and wma_update for grid.horizon_t steps. The
/// teacher is refreshed every update_every-th step (held constant between
/// refreshes, kernel mass untouched), matching a sparse update schedule.
SdwmaTrajectory run_sdwma(const TargetProblem& prob, const Mat& w0, double lambda,
                          const KernelSpec& kernel, const TimeGrid& grid,
                          int update_every = 1);

struct PersistenceReport {
  double gap_lhs = 0.0;   // ||W^T - W_wma^T||_F
  double gap_rhs = 0.0;   // omega_{0|T} ||W^T - W^0||_F
  double grad_lhs = 0.0;  // ||lambda (W^T - W_wma^T) C||_F
  double grad_rhs = 0.0;  // lambda mu omega_{0|T} ||W^T - W^0||_F
  double omega0_final = 0.0;
  double mu = 0.0;
  bool gradient_bound_applicable = false;  // U rows inside range(C)
};

/// Evaluates the finite-horizon persistence inequality on the synthetic
/// monotone trajectory W^k = w0 + a_k U and, for the exactly quadratic
/// distillation regularizer g(W) = lambda (W - W_wma^T) C, the matching
/// gradient lower bound. steps_a must be nondecreasing from 0 and have
/// grid.horizon_t + 1 entries; U must have unit Frobenius norm.
PersistenceReport persistence_check(const Mat& w0, const Mat& direction_u,
                                    const std::vector<double>& steps_a,
                                    const KernelSpec& kernel, const TimeGrid& grid,
                                    double lambda, const Mat& c_gram);

struct EmaGapReport {
  std::vector<double> gaps;  // ||W_ema^t - W^t||_F, t = 0..T
  double final_gap = 0.0;
};

/// Tracks the EMA teacher's distance to the student along a given
/// trajectory; for convergent trajectories the tail decays to zero, the
/// contrast to the WMA finite-horizon gap.
EmaGapReport ema_gap_decay(const std::vector<Mat>& w_trajectory, double rho);

}  // namespace linft
