#include "linft/teacher.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace linft {

void TimeGrid::validate() const {
  if (horizon_t < 1) throw std::invalid_argument("TimeGrid: horizon_t must be >= 1");
  if (c1 <= 0.0 || c2 <= 0.0) throw std::invalid_argument("TimeGrid: offsets must be positive");
  if (tau(horizon_t) >= 1.0)
    throw std::invalid_argument("TimeGrid: tau_T must stay below 1 (need c2 > c1)");
}

double kernel_eval(const KernelSpec& kernel, double tau, int step) {
  struct Visitor {
    double tau;
    int step;
    double operator()(const BetaKernel& k) const {
      if (k.beta1 <= 0.0 || k.beta2 <= 0.0)
        throw std::invalid_argument("kernel_eval: Beta shape parameters must be positive");
      if (tau <= 0.0 || tau >= 1.0)
        throw std::domain_error("kernel_eval: Beta kernel needs tau strictly inside (0,1)");
      return std::pow(tau, k.beta1 - 1.0) * std::pow(1.0 - tau, k.beta2 - 1.0);
    }
    double operator()(const UniformKernel&) const { return 1.0; }
    double operator()(const EmaEquivalentKernel& k) const {
      if (k.rho <= 0.0 || k.rho >= 1.0)
        throw std::invalid_argument("kernel_eval: EmaEquivalent rho must lie in (0,1)");
      if (k.alpha0 <= 0.0)
        throw std::invalid_argument("kernel_eval: EmaEquivalent alpha0 must be positive");
      if (step == 0) return k.alpha0;
      return (1.0 - k.rho) / std::pow(k.rho, static_cast<double>(step)) * k.alpha0;
    }
  };
  const double v = std::visit(Visitor{tau, step}, kernel);
  if (!std::isfinite(v) || v <= 0.0)
    throw std::domain_error("kernel_eval: kernel value must be positive and finite");
  return v;
}

TeacherState TeacherState::init(Mat w0, KernelSpec kernel, TimeGrid grid) {
  grid.validate();
  TeacherState s;
  s.cumulative_alpha = kernel_eval(kernel, grid.tau(0), 0);
  s.weights = std::move(w0);
  s.step = 0;
  s.last_omega = 1.0;
  s.kernel = std::move(kernel);
  s.grid = grid;
  return s;
}

TeacherState wma_update(const TeacherState& state, const Mat& w_student) {
  if (state.step >= state.grid.horizon_t)
    throw std::invalid_argument("wma_update: grid horizon exhausted");
  if (w_student.rows() != state.weights.rows() || w_student.cols() != state.weights.cols())
    throw std::invalid_argument("wma_update: student shape mismatch");

  const int next = state.step + 1;
  const double alpha = kernel_eval(state.kernel, state.grid.tau(next), next);
  const double mass = state.cumulative_alpha + alpha;
  if (mass <= 0.0) throw std::logic_error("wma_update: cumulative kernel mass is zero");
  const double omega = alpha / mass;

  TeacherState out = state;
  out.weights = (1.0 - omega) * state.weights + omega * w_student;
  out.cumulative_alpha = mass;
  out.step = next;
  out.last_omega = omega;
  return out;
}

Mat ema_update(const Mat& w_teacher, const Mat& w_student, double rho) {
  if (rho <= 0.0 || rho >= 1.0) throw std::invalid_argument("ema_update: rho must lie in (0,1)");
  if (w_teacher.rows() != w_student.rows() || w_teacher.cols() != w_student.cols())
    throw std::invalid_argument("ema_update: shape mismatch");
  return rho * w_teacher + (1.0 - rho) * w_student;
}

Mat sdwma_step(const TargetProblem& prob, const Mat& w_student_prev,
               const Mat& w_teacher_prev, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("sdwma_step: lambda must be positive");
  if (w_student_prev.cols() != prob.p_i.rows() || w_teacher_prev.cols() != prob.p_i.rows())
    throw std::invalid_argument("sdwma_step: weight shapes incompatible with projector");
  const double a = lambda / (1.0 + lambda);
  Mat parallel_prev = w_student_prev * prob.p_i;
  return (w_student_prev - parallel_prev) + a * (w_teacher_prev * prob.p_i) +
         (1.0 - a) * prob.w_star;
}

SdwmaTrajectory run_sdwma(const TargetProblem& prob, const Mat& w0, double lambda,
                          const KernelSpec& kernel, const TimeGrid& grid,
                          int update_every) {
  if (update_every < 1) throw std::invalid_argument("run_sdwma: update_every must be >= 1");
  TeacherState teacher = TeacherState::init(w0, kernel, grid);
  Mat student = w0;

  auto record = [&](int step, double omega) {
    SdwmaRecord r;
    r.step = step;
    r.w_student = student;
    r.w_teacher = teacher.weights;
    r.omega = omega;
    r.err_teacher = ((teacher.weights - prob.w_star) * prob.p_i).norm();
    r.err_student = ((student - prob.w_star) * prob.p_i).norm();
    return r;
  };

  SdwmaTrajectory traj;
  traj.records.reserve(static_cast<std::size_t>(grid.horizon_t) + 1);
  traj.records.push_back(record(0, 0.0));

  for (int t = 1; t <= grid.horizon_t; ++t) {
    student = sdwma_step(prob, student, teacher.weights, lambda);
    double omega = 0.0;
    if (t % update_every == 0) {
      teacher = wma_update(teacher, student);
      omega = teacher.last_omega;
    }
    traj.records.push_back(record(t, omega));
  }
  return traj;
}

PersistenceReport persistence_check(const Mat& w0, const Mat& direction_u,
                                    const std::vector<double>& steps_a,
                                    const KernelSpec& kernel, const TimeGrid& grid,
                                    double lambda, const Mat& c_gram) {
  grid.validate();
  if (lambda <= 0.0) throw std::invalid_argument("persistence_check: lambda must be positive");
  if (std::abs(direction_u.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("persistence_check: direction must have unit Frobenius norm");
  if (steps_a.size() != static_cast<std::size_t>(grid.horizon_t) + 1)
    throw std::invalid_argument("persistence_check: steps_a must have horizon_t + 1 entries");
  if (steps_a.front() != 0.0)
    throw std::invalid_argument("persistence_check: trajectory must start at a_0 = 0");
  for (std::size_t k = 1; k < steps_a.size(); ++k) {
    if (steps_a[k] < steps_a[k - 1])
      throw std::invalid_argument("persistence_check: steps_a must be nondecreasing");
  }
  if (direction_u.cols() != c_gram.rows() || c_gram.rows() != c_gram.cols())
    throw std::invalid_argument("persistence_check: c_gram incompatible with direction");

  // Online teacher over the synthetic monotone trajectory.
  TeacherState teacher = TeacherState::init(w0, kernel, grid);
  double total_alpha = teacher.cumulative_alpha;
  for (int k = 1; k <= grid.horizon_t; ++k) {
    Mat wk = w0 + steps_a[static_cast<std::size_t>(k)] * direction_u;
    teacher = wma_update(teacher, wk);
    total_alpha = teacher.cumulative_alpha;
  }

  Mat w_final = w0 + steps_a.back() * direction_u;
  const double omega0 = kernel_eval(kernel, grid.tau(0), 0) / total_alpha;

  PersistenceReport rep;
  rep.omega0_final = omega0;
  rep.gap_lhs = (w_final - teacher.weights).norm();
  rep.gap_rhs = omega0 * (w_final - w0).norm();

  // Quadratic-regularizer gradient bound; only meaningful when the motion
  // direction lies inside range(c_gram), otherwise the curvature along U
  // can vanish and the bound is vacuous.
  Mat range_proj = c_gram * pinv(c_gram);
  Mat out_of_range = direction_u - direction_u * range_proj;
  rep.gradient_bound_applicable = out_of_range.norm() <= 1e-9;

  rep.grad_lhs = (lambda * (w_final - teacher.weights) * c_gram).norm();
  if (rep.gradient_bound_applicable) {
    double mu = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < direction_u.rows(); ++i) {
      Eigen::VectorXd row = direction_u.row(i).transpose();
      const double sq = row.squaredNorm();
      if (sq > 1e-14) {
        const double rayleigh = row.dot(c_gram * row) / sq;
        mu = std::min(mu, rayleigh);
      }
    }
    rep.mu = std::isfinite(mu) ? mu : 0.0;
    rep.grad_rhs = lambda * rep.mu * omega0 * (w_final - w0).norm();
  }
  return rep;
}

EmaGapReport ema_gap_decay(const std::vector<Mat>& w_trajectory, double rho) {
  if (w_trajectory.empty()) throw std::invalid_argument("ema_gap_decay: empty trajectory");
  EmaGapReport rep;
  rep.gaps.reserve(w_trajectory.size());
  Mat ema = w_trajectory.front();
  rep.gaps.push_back(0.0);
  for (std::size_t t = 1; t < w_trajectory.size(); ++t) {
    ema = ema_update(ema, w_trajectory[t], rho);
    rep.gaps.push_back((ema - w_trajectory[t]).norm());
  }
  rep.final_gap = rep.gaps.back();
  return rep;
}

}  // namespace linft
