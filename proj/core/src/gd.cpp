#include "linft/gd.hpp"

#include <limits>
#include <stdexcept>

namespace linft {

namespace {

// Largest eigenvalue of the symmetric PSD gram.
double gram_top_eigenvalue(const Mat& gram) {
  if (gram.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return ev.size() > 0 ? std::max(0.0, ev(ev.size() - 1)) : 0.0;
}

}  // namespace

void QuadProgram::validate(SvdTolerance tol) const {
  if (gram.rows() != gram.cols()) throw std::invalid_argument("QuadProgram: gram must be square");
  if (p_term.cols() != gram.rows())
    throw std::invalid_argument("QuadProgram: p_term incompatible with gram");
  if (scale_c <= 0.0) throw std::invalid_argument("QuadProgram: scale_c must be positive");
  Mat proj = gram * pinv(gram, tol);  // projector onto range(gram)
  Mat residual = p_term - p_term * proj;
  if (residual.norm() > 1e-9 * (1.0 + p_term.norm()))
    throw std::invalid_argument("QuadProgram: p_term has a component outside range(gram)");
}

double max_step(const QuadProgram& q) {
  const double lam = gram_top_eigenvalue(q.gram);
  if (lam <= 0.0) return std::numeric_limits<double>::infinity();
  return 0.9 * 2.0 / (q.scale_c * lam);
}

GdResult gd_solve(const QuadProgram& q, const Mat& w0, const GdConfig& cfg) {
  if (w0.cols() != q.gram.rows()) throw std::invalid_argument("gd_solve: w0 incompatible with gram");
  if (cfg.step <= 0.0) throw std::invalid_argument("gd_solve: step must be positive");
  q.validate();

  const double lam = gram_top_eigenvalue(q.gram);
  if (!cfg.allow_unstable && lam > 0.0 && cfg.step >= 2.0 / (q.scale_c * lam))
    throw std::invalid_argument("gd_solve: step out of the stability bound (0, 2/||Q||)");

  GdResult res;
  res.w = w0;
  for (long t = 0; t < cfg.max_iters; ++t) {
    Mat grad = q.apply_q(res.w) - q.p_term;
    Mat next = res.w - cfg.step * grad;
    const double move = (next - res.w).norm();
    res.w = std::move(next);
    res.iters = t + 1;
    if (cfg.on_iterate) cfg.on_iterate(res.iters, res.w);
    if (!res.w.allFinite()) return res;  // diverged under allow_unstable
    if (move < cfg.tol * (1.0 + res.w.norm())) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

QuadProgram direct_ft_program(const TargetProblem& prob, const Mat& x_img) {
  QuadProgram q;
  q.gram = prob.c_i;
  q.scale_c = 1.0;
  q.p_term = prob.y_ft * x_img.transpose();
  return q;
}

QuadProgram l2sp_program(const TargetProblem& prob, const Mat& x_img, const Mat& w0, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("l2sp_program: lambda must be positive");
  QuadProgram q;
  const auto d = prob.c_i.rows();
  q.gram = prob.c_i + lambda * Mat::Identity(d, d);
  q.scale_c = 1.0;
  q.p_term = prob.y_ft * x_img.transpose() + lambda * w0;
  return q;
}

QuadProgram static_sd_program(const TargetProblem& prob, const Mat& x_img, const Mat& w0, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("static_sd_program: lambda must be positive");
  QuadProgram q;
  q.gram = prob.c_i;
  q.scale_c = 1.0 + lambda;
  q.p_term = prob.y_ft * x_img.transpose() + lambda * (w0 * prob.c_i);
  return q;
}

namespace {

double rel_err(const Mat& got, const Mat& want) {
  const double denom = want.norm();
  return denom > 0.0 ? (got - want).norm() / denom : (got - want).norm();
}

}  // namespace

UnifiedReport verify_unified_framework(const FinetuneInstance& inst, double lambda,
                                       const GdConfig& cfg_template) {
  inst.validate();
  TargetProblem prob = TargetProblem::build(inst);
  UnifiedReport rep;

  auto run = [&](const QuadProgram& q, const Mat& want, double& err, long& iters) {
    GdConfig cfg = cfg_template;
    if (cfg.step <= 0.0) {
      const double ms = max_step(q);
      cfg.step = std::isfinite(ms) ? ms : 1.0;
    }
    GdResult r = gd_solve(q, inst.w_img0, cfg);
    err = rel_err(r.w, want);
    iters = r.iters;
  };

  run(direct_ft_program(prob, inst.x_img), solve_direct_ft(prob, inst.w_img0).weights,
      rep.err_direct_ft, rep.iters_direct_ft);
  run(l2sp_program(prob, inst.x_img, inst.w_img0, lambda),
      solve_l2sp(prob, inst.w_img0, lambda).weights, rep.err_l2sp, rep.iters_l2sp);
  run(static_sd_program(prob, inst.x_img, inst.w_img0, lambda),
      solve_static_sd(prob, inst.w_img0, lambda).weights, rep.err_static_sd, rep.iters_static_sd);

  rep.pass = rep.err_direct_ft < 1e-6 && rep.err_l2sp < 1e-6 && rep.err_static_sd < 1e-6;
  return rep;
}

}  // namespace linft
