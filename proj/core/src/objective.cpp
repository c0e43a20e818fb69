#include "linft/objective.hpp"

#include <stdexcept>

namespace linft {

void FinetuneInstance::validate() const {
  if (x_img.cols() < 1) throw std::invalid_argument("FinetuneInstance: need n >= 1");
  if (x_img.cols() != x_txt.cols())
    throw std::invalid_argument("FinetuneInstance: image/text batch sizes differ");
  if (w_img0.rows() != w_txt0.rows())
    throw std::invalid_argument("FinetuneInstance: encoders disagree on embedding dim");
  if (w_img0.cols() != x_img.rows())
    throw std::invalid_argument("FinetuneInstance: w_img0 does not accept x_img");
  if (w_txt0.cols() != x_txt.rows())
    throw std::invalid_argument("FinetuneInstance: w_txt0 does not accept x_txt");
  if (rho < 0.0) throw std::invalid_argument("FinetuneInstance: rho must be nonnegative");
  if (!x_img.allFinite() || !x_txt.allFinite() || !w_img0.allFinite() || !w_txt0.allFinite())
    throw std::invalid_argument("FinetuneInstance: non-finite entries");
}

Mat contrastive_target(const FinetuneInstance& inst) {
  inst.validate();
  const auto n = inst.n();
  Mat centering = static_cast<double>(n) * Mat::Identity(n, n) - Mat::Ones(n, n);
  return inst.w_txt0 * inst.x_txt * centering;
}

Mat similarity_matrix(const Mat& w_img, const Mat& w_txt, const Mat& x_img, const Mat& x_txt) {
  if (w_img.cols() != x_img.rows() || w_txt.cols() != x_txt.rows() ||
      w_img.rows() != w_txt.rows() || x_img.cols() != x_txt.cols())
    throw std::invalid_argument("similarity_matrix: shape mismatch");
  return (w_img * x_img).transpose() * (w_txt * x_txt);
}

double l_cl(const Mat& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("l_cl: similarity matrix must be square");
  const double n = static_cast<double>(s.rows());
  return s.sum() - n * s.trace();
}

double mmcl_loss(const FinetuneInstance& inst, const Mat& w_img) {
  inst.validate();
  const auto n = inst.n();
  if (n < 2) throw std::invalid_argument("mmcl_loss: needs n >= 2");
  Mat s = similarity_matrix(w_img, inst.w_txt0, inst.x_img, inst.x_txt);
  const double cl = l_cl(s) / (static_cast<double>(n) * static_cast<double>(n - 1));
  const Mat cross = w_img.transpose() * inst.w_txt0;  // d_I x d_T
  return cl + 0.5 * inst.rho * cross.squaredNorm();
}

double ls_objective(const Mat& w_img, const TargetProblem& prob, const Mat& x_img) {
  if (w_img.cols() != x_img.rows() || prob.y_ft.rows() != w_img.rows() ||
      prob.y_ft.cols() != x_img.cols())
    throw std::invalid_argument("ls_objective: shape mismatch");
  return 0.5 * (w_img * x_img - prob.y_ft).squaredNorm();
}

Mat ls_gradient(const Mat& w_img, const TargetProblem& prob, const Mat& x_img) {
  if (w_img.cols() != x_img.rows() || prob.y_ft.rows() != w_img.rows() ||
      prob.y_ft.cols() != x_img.cols())
    throw std::invalid_argument("ls_gradient: shape mismatch");
  return (w_img * x_img - prob.y_ft) * x_img.transpose();
}

TraceIdentityReport trace_identity_check(const FinetuneInstance& inst, const Mat& w_img) {
  Mat y = contrastive_target(inst);
  Mat wx = w_img * inst.x_img;
  TraceIdentityReport r;
  r.quad_term = 0.5 * wx.squaredNorm();
  r.lhs = 0.5 * (wx - y).squaredNorm();
  r.rhs = r.quad_term - (y.transpose() * wx).trace() + 0.5 * y.squaredNorm();
  return r;
}

TargetProblem TargetProblem::build(const FinetuneInstance& inst, SvdTolerance tol) {
  inst.validate();
  TargetProblem p;
  p.y_ft = contrastive_target(inst);
  p.c_i = inst.x_img * inst.x_img.transpose();
  p.c_i_pinv = pinv(p.c_i, tol);
  p.p_i = projector_range(inst.x_img, tol);
  p.w_star = p.y_ft * inst.x_img.transpose() * p.c_i_pinv;
  return p;
}

}  // namespace linft
