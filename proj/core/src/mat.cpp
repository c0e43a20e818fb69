#include "linft/mat.hpp"

#include <Eigen/SVD>

#include <stdexcept>

namespace linft {

bool all_finite(const Mat& a) { return a.allFinite(); }

Mat mat_from(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  if (n_rows == 0) throw std::invalid_argument("mat_from: empty row list");
  const auto n_cols = static_cast<Eigen::Index>(rows.begin()->size());
  Mat m(n_rows, n_cols);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != n_cols)
      throw std::invalid_argument("mat_from: ragged rows");
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  if (!m.allFinite()) throw std::invalid_argument("mat_from: non-finite entry");
  return m;
}

double frobenius_inner(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("frobenius_inner: shape mismatch");
  return a.cwiseProduct(b).sum();
}

Mat pinv(const Mat& a, SvdTolerance tol) {
  if (tol.rel_cutoff < 0.0 || tol.rel_cutoff >= 1.0)
    throw std::invalid_argument("pinv: rel_cutoff must lie in [0, 1)");
  if (!a.allFinite()) throw std::invalid_argument("pinv: non-finite input");

  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  const double sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
  const double cutoff = tol.rel_cutoff * sigma_max;

  Eigen::VectorXd inv_sigma = Eigen::VectorXd::Zero(sigma.size());
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    if (sigma(k) > cutoff && sigma(k) > 0.0) inv_sigma(k) = 1.0 / sigma(k);
  }
  return svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose();
}

Mat projector_range(const Mat& x, SvdTolerance tol) {
  if (!x.allFinite()) throw std::invalid_argument("projector_range: non-finite input");
  if (x.cols() <= x.rows()) {
    Mat gram = x.transpose() * x;  // n x n
    return x * pinv(gram, tol) * x.transpose();
  }
  // Wide X: C C^+ is the same projector onto range(X) and avoids the
  // n x n Gram when n >> d. Equivalence is covered by tests.
  Mat c = x * x.transpose();
  return c * pinv(c, tol);
}

double op_norm_gram(const Mat& x) {
  if (!x.allFinite()) throw std::invalid_argument("op_norm_gram: non-finite input");
  if (x.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(x);
  const double s = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  return s * s;
}

}  // namespace linft
