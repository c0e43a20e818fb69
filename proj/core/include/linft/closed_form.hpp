#pragma once

#include "linft/objective.hpp"

namespace linft {

enum class Strategy { DirectFT, L2SP, StaticSD };

const char* strategy_name(Strategy s);

/// A converged finetuning solution together with its split into the
/// task-subspace component W P and the orthogonal component W (I - P).
struct StrategySolution {
  Mat weights;
  Strategy strategy = Strategy::DirectFT;
  double lambda = 0.0;
  Mat parallel;
  Mat orthogonal;
};

/// Minimum-norm solution Y X^T (X X^T)^+ of the least-squares task; lives
/// entirely inside the task subspace.
Mat min_norm_task_solution(const TargetProblem& prob);

/// Direct finetuning limit: keep w0 outside the task subspace, replace the
/// inside with the minimum-norm task solution.
StrategySolution solve_direct_ft(const TargetProblem& prob, const Mat& w0);

/// Ridge-anchored solution (Y X^T + lambda w0)(C + lambda I)^{-1}, computed
/// by a direct linear solve. Requires lambda > 0.
StrategySolution solve_l2sp(const TargetProblem& prob, const Mat& w0, double lambda);

/// Static self-distillation: orthogonal part preserved exactly, parallel
/// part the convex mix lambda/(1+lambda) w0 P + 1/(1+lambda) W*.
StrategySolution solve_static_sd(const TargetProblem& prob, const Mat& w0, double lambda);

/// Residual offset of the static-SD solution from the task optimum inside
/// the task subspace: (W_SD - W*) P, which equals
/// lambda/(1+lambda) (w0 P - W*). Throws if the two expressions disagree.
Mat anchor_bias(const TargetProblem& prob, const Mat& w0, double lambda);

struct Decomposition {
  Mat parallel;    // W P
  Mat orthogonal;  // W (I - P)
};

/// Splits W against an idempotent symmetric projector P.
Decomposition decompose(const Mat& w, const Mat& p_i);

}  // namespace linft
