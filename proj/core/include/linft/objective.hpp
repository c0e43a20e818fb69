#pragma once

#include "linft/mat.hpp"

namespace linft {

/// One linearized finetuning problem: batched image/text features plus the
/// pretrained encoders. The text encoder stays frozen at w_txt0 throughout.
struct FinetuneInstance {
  Mat x_img;   // d_I x n
  Mat x_txt;   // d_T x n
  Mat w_img0;  // p x d_I
  Mat w_txt0;  // p x d_T
  double rho = 0.0;  // cross-Frobenius regularizer coefficient

  Eigen::Index n() const { return x_img.cols(); }
  void validate() const;
};

/// Derived quantities cached for the solvers: the regression target, the
/// task-subspace projector, the feature Gram and its pseudoinverse, and the
/// minimum-norm task solution. All are fixed once the instance is fixed.
struct TargetProblem {
  Mat y_ft;      // p x n
  Mat p_i;       // d_I x d_I, projector onto range(x_img)
  Mat c_i;       // d_I x d_I Gram X X^T
  Mat c_i_pinv;  // d_I x d_I
  Mat w_star;    // p x d_I, minimum-norm task solution

  static TargetProblem build(const FinetuneInstance& inst, SvdTolerance tol = {});
};

/// Contrastive target matrix W_T^0 X_T (n I - J). Depends only on the frozen
/// text side, so it stays fixed while the image encoder trains. Columns sum
/// against the all-ones vector to zero (centering).
Mat contrastive_target(const FinetuneInstance& inst);

/// Batch similarity matrix S = (W_I X_I)^T (W_T X_T); S_ij is the dot product
/// of image embedding i with text embedding j.
Mat similarity_matrix(const Mat& w_img, const Mat& w_txt, const Mat& x_img, const Mat& x_txt);

/// Core contrastive alignment term 1^T S 1 - n tr(S), i.e. off-diagonal
/// attraction minus (n-1)-weighted diagonal alignment.
double l_cl(const Mat& s);

/// Full linearized contrastive loss: l_cl/(n(n-1)) plus the rho/2 cross-
/// Frobenius term against the frozen text encoder. Requires n >= 2.
double mmcl_loss(const FinetuneInstance& inst, const Mat& w_img);

/// Least-squares reformulation value 1/2 ||W X - Y||_F^2.
double ls_objective(const Mat& w_img, const TargetProblem& prob, const Mat& x_img);

/// Gradient (W X - Y) X^T of the least-squares objective.
Mat ls_gradient(const Mat& w_img, const TargetProblem& prob, const Mat& x_img);

struct TraceIdentityReport {
  double lhs = 0.0;        // 1/2 ||W X - Y||^2
  double rhs = 0.0;        // 1/2 ||W X||^2 - tr(Y^T W X) + 1/2 ||Y||^2
  double quad_term = 0.0;  // the data-dependent 1/2 ||W X||^2 term
};

/// Evaluates both sides of the least-squares expansion around the trace
/// form, exposing the data-dependent quadratic term.
TraceIdentityReport trace_identity_check(const FinetuneInstance& inst, const Mat& w_img);

}  // namespace linft
