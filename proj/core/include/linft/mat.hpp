#pragma once

#include <Eigen/Dense>

#include <initializer_list>

namespace linft {

/// Dense real matrix, the universal carrier for encoder weights, feature
/// batches, targets and projectors. Row/column counts are explicit; storage
/// layout is Eigen's and not part of the contract.
using Mat = Eigen::MatrixXd;

/// Relative singular-value cutoff for rank decisions in SVD-based routines.
/// Singular values below rel_cutoff * sigma_max are treated as zero.
struct SvdTolerance {
  double rel_cutoff = 1e-12;
};

bool all_finite(const Mat& a);

/// Builds a matrix from nested row lists; throws on ragged rows or
/// non-finite entries.
Mat mat_from(std::initializer_list<std::initializer_list<double>> rows);

/// Frobenius inner product <A, B> = sum_ij A_ij B_ij.
/// Throws std::invalid_argument on shape mismatch.
double frobenius_inner(const Mat& a, const Mat& b);

/// Moore-Penrose pseudoinverse via full SVD. Rank is decided by
/// tol.rel_cutoff relative to the largest singular value.
Mat pinv(const Mat& a, SvdTolerance tol = {});

/// Orthogonal projector onto range(X) for a d x n feature matrix X,
/// built as X (X^T X)^+ X^T. Symmetric, idempotent, and P X = X.
Mat projector_range(const Mat& x, SvdTolerance tol = {});

/// Largest eigenvalue of X X^T, i.e. sigma_max(X)^2. This is the operator
/// norm of the quadratic map W -> W (X X^T) used for step-size bounds.
double op_norm_gram(const Mat& x);

}  // namespace linft
