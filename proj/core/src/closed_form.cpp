#include "linft/closed_form.hpp"

#include <stdexcept>

namespace linft {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::DirectFT: return "direct_ft";
    case Strategy::L2SP: return "l2sp";
    case Strategy::StaticSD: return "static_sd";
  }
  return "unknown";
}

namespace {

StrategySolution finish(Mat w, Strategy s, double lambda, const Mat& p_i) {
  StrategySolution out;
  out.strategy = s;
  out.lambda = lambda;
  out.parallel = w * p_i;
  out.orthogonal = w - out.parallel;
  out.weights = std::move(w);
  return out;
}

}  // namespace

Mat min_norm_task_solution(const TargetProblem& prob) { return prob.w_star; }

StrategySolution solve_direct_ft(const TargetProblem& prob, const Mat& w0) {
  if (w0.cols() != prob.p_i.rows())
    throw std::invalid_argument("solve_direct_ft: w0 incompatible with projector");
  Mat eye = Mat::Identity(prob.p_i.rows(), prob.p_i.cols());
  Mat w = w0 * (eye - prob.p_i) + prob.w_star;
  return finish(std::move(w), Strategy::DirectFT, 0.0, prob.p_i);
}

StrategySolution solve_l2sp(const TargetProblem& prob, const Mat& w0, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("solve_l2sp: lambda must be positive");
  if (w0.cols() != prob.c_i.rows())
    throw std::invalid_argument("solve_l2sp: w0 incompatible with Gram");
  const auto d = prob.c_i.rows();
  // W (C + lambda I) = W* C + lambda w0; note W* C = Y X^T exactly since the
  // rows of Y X^T lie in range(C).
  Mat lhs = prob.c_i + lambda * Mat::Identity(d, d);
  Mat rhs = prob.w_star * prob.c_i + lambda * w0;
  Mat w = lhs.ldlt().solve(rhs.transpose()).transpose();
  return finish(std::move(w), Strategy::L2SP, lambda, prob.p_i);
}

StrategySolution solve_static_sd(const TargetProblem& prob, const Mat& w0, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("solve_static_sd: lambda must be positive");
  if (w0.cols() != prob.p_i.rows())
    throw std::invalid_argument("solve_static_sd: w0 incompatible with projector");
  const double mix = 1.0 / (1.0 + lambda);
  Mat eye = Mat::Identity(prob.p_i.rows(), prob.p_i.cols());
  Mat w = w0 * (eye - mix * prob.p_i) + mix * prob.w_star;
  return finish(std::move(w), Strategy::StaticSD, lambda, prob.p_i);
}

Mat anchor_bias(const TargetProblem& prob, const Mat& w0, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("anchor_bias: lambda must be positive");
  StrategySolution sd = solve_static_sd(prob, w0, lambda);
  Mat bias = (sd.weights - prob.w_star) * prob.p_i;
  Mat expected = (lambda / (1.0 + lambda)) * (w0 * prob.p_i - prob.w_star);
  const double scale = 1.0 + expected.norm();
  if ((bias - expected).norm() > 1e-10 * scale)
    throw std::logic_error("anchor_bias: closed-form offset identity violated");
  return bias;
}

Decomposition decompose(const Mat& w, const Mat& p_i) {
  if (w.cols() != p_i.rows() || p_i.rows() != p_i.cols())
    throw std::invalid_argument("decompose: incompatible projector");
  Decomposition d;
  d.parallel = w * p_i;
  d.orthogonal = w - d.parallel;
  return d;
}

}  // namespace linft
