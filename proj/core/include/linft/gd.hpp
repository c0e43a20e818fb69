#pragma once

#include "linft/closed_form.hpp"
#include "linft/objective.hpp"

#include <functional>

namespace linft {

/// Quadratic program f(W) = c/2 <W, W G>_F - <P, W>_F with G a symmetric PSD
/// Gram matrix, covering every objective in this library: the map
/// Q(W) = c W G has ||Q||_op = c lambda_max(G).
struct QuadProgram {
  Mat gram;          // d x d, symmetric PSD
  Mat p_term;        // p x d linear term
  double scale_c = 1.0;

  Mat apply_q(const Mat& w) const { return scale_c * (w * gram); }
  double objective(const Mat& w) const {
    return 0.5 * frobenius_inner(w, apply_q(w)) - frobenius_inner(p_term, w);
  }
  /// Checks p_term rows lie in range(gram); required for the convergence
  /// limit to hold. Throws std::invalid_argument otherwise.
  void validate(SvdTolerance tol = {}) const;
};

struct GdConfig {
  double step = 0.0;           // gamma; must satisfy 0 < gamma < 2/||Q||_op
  long max_iters = 200000;
  double tol = 1e-12;          // stop when ||W_{t+1}-W_t|| < tol (1 + ||W_t||)
  bool allow_unstable = false; // skip the step-size bound check (stability probes)
  std::function<void(long iter, const Mat& w)> on_iterate;  // optional observer
};

struct GdResult {
  Mat w;
  long iters = 0;
  bool converged = false;
};

/// Plain gradient descent W <- W - gamma (Q(W) - P). With an in-range P and
/// a stable step this converges to (I - Pi_Q)(W0) + Q^+(P); the component of
/// W0 in the null space of Q is never touched.
GdResult gd_solve(const QuadProgram& q, const Mat& w0, const GdConfig& cfg);

/// Largest stable step 2/(c lambda_max(G)) with a 0.9 safety factor.
/// Returns +infinity for a zero Gram (the gradient is constant zero there).
double max_step(const QuadProgram& q);

/// Builders for the three strategy programs, all solved from w_img0.
QuadProgram direct_ft_program(const TargetProblem& prob, const Mat& x_img);
QuadProgram l2sp_program(const TargetProblem& prob, const Mat& x_img, const Mat& w0, double lambda);
QuadProgram static_sd_program(const TargetProblem& prob, const Mat& x_img, const Mat& w0, double lambda);

struct UnifiedReport {
  double err_direct_ft = 0.0;
  double err_l2sp = 0.0;
  double err_static_sd = 0.0;
  long iters_direct_ft = 0;
  long iters_l2sp = 0;
  long iters_static_sd = 0;
  bool pass = false;  // all three relative errors < 1e-6
};

/// Runs GD for all three strategies from w_img0 and compares against the
/// closed forms; the Frobenius relative errors are the verification output.
UnifiedReport verify_unified_framework(const FinetuneInstance& inst, double lambda,
                                       const GdConfig& cfg_template);

}  // namespace linft
