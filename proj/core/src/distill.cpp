#include "linft/distill.hpp"

#include "linft/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace linft {

void EmbeddingBatch::validate() const {
  if (img.rows() != txt.rows() || img.cols() != txt.cols())
    throw std::invalid_argument("EmbeddingBatch: image/text shapes differ");
  if (img.rows() < 1) throw std::invalid_argument("EmbeddingBatch: empty batch");
  if (!img.allFinite() || !txt.allFinite())
    throw std::invalid_argument("EmbeddingBatch: non-finite embeddings");
}

EmbeddingBatch normalize_rows(const EmbeddingBatch& batch) {
  batch.validate();
  EmbeddingBatch out = batch;
  for (Eigen::Index i = 0; i < out.img.rows(); ++i) {
    const double ni = out.img.row(i).norm();
    const double nt = out.txt.row(i).norm();
    if (ni <= 0.0 || nt <= 0.0)
      throw std::invalid_argument("normalize_rows: zero-norm embedding row");
    out.img.row(i) /= ni;
    out.txt.row(i) /= nt;
  }
  out.normalized = true;
  return out;
}

namespace {

void check_pair(const EmbeddingBatch& teacher, const EmbeddingBatch& student) {
  teacher.validate();
  student.validate();
  if (teacher.size() != student.size() || teacher.img.cols() != student.img.cols())
    throw std::invalid_argument("distill: teacher/student batch shapes differ");
}

// Row-wise log-softmax with max subtraction.
Mat log_softmax_rows(const Mat& logits) {
  Mat out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    const double lse = m + std::log((out.row(i).array() - m).exp().sum());
    out.row(i).array() -= lse;
  }
  return out;
}

Mat softmax_rows(const Mat& logits) { return log_softmax_rows(logits).array().exp(); }

// KL(p || q) summed over rows of log-prob matrices, 1 row = 1 distribution.
double kl_rows(const Mat& logp, const Mat& logq) {
  return ((logp.array().exp()) * (logp.array() - logq.array())).sum();
}

}  // namespace

double fd_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student) {
  check_pair(teacher, student);
  const double n = static_cast<double>(teacher.size());
  return ((teacher.img - student.img).squaredNorm() +
          (teacher.txt - student.txt).squaredNorm()) / n;
}

double crd_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                const DistillConfig& cfg) {
  check_pair(teacher, student);
  if (cfg.tau <= 0.0) throw std::invalid_argument("crd_loss: tau must be positive");
  const double n = static_cast<double>(teacher.size());
  Mat lp_t = log_softmax_rows(teacher.img * teacher.txt.transpose() / cfg.tau);
  Mat lp_s = log_softmax_rows(student.img * student.txt.transpose() / cfg.tau);
  Mat lq_t = log_softmax_rows(teacher.txt * teacher.img.transpose() / cfg.tau);
  Mat lq_s = log_softmax_rows(student.txt * student.img.transpose() / cfg.tau);
  return (kl_rows(lp_t, lp_s) + kl_rows(lq_t, lq_s)) / n;
}

double icl_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                const DistillConfig& cfg) {
  check_pair(teacher, student);
  if (cfg.tau <= 0.0) throw std::invalid_argument("icl_loss: tau must be positive");
  const double n = static_cast<double>(teacher.size());
  Mat lp1 = log_softmax_rows(student.img * teacher.txt.transpose() / cfg.tau);
  Mat lp2 = log_softmax_rows(student.txt * teacher.img.transpose() / cfg.tau);
  return -(lp1.diagonal().sum() + lp2.diagonal().sum()) / (2.0 * n);
}

double crosskd_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                    const DistillConfig& cfg) {
  check_pair(teacher, student);
  if (cfg.tau <= 0.0) throw std::invalid_argument("crosskd_loss: tau must be positive");
  const double n = static_cast<double>(teacher.size());
  Mat lp_t = log_softmax_rows(teacher.img * teacher.txt.transpose() / cfg.tau);
  Mat lq_t = log_softmax_rows(teacher.txt * teacher.img.transpose() / cfg.tau);
  Mat lp_x = log_softmax_rows(student.img * teacher.txt.transpose() / cfg.tau);
  Mat lq_x = log_softmax_rows(student.txt * teacher.img.transpose() / cfg.tau);
  return (kl_rows(lp_t, lp_x) + kl_rows(lq_t, lq_x)) / (2.0 * n);
}

double composite_sd_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                         const DistillConfig& cfg) {
  check_pair(teacher, student);
  double total = 0.0;
  if (cfg.w_fd != 0.0) total += cfg.w_fd * fd_loss(teacher, student);
  if (cfg.w_crd != 0.0) total += cfg.w_crd * crd_loss(teacher, student, cfg);
  if (cfg.w_icl != 0.0) total += cfg.w_icl * icl_loss(teacher, student, cfg);
  if (cfg.w_crosskd != 0.0) total += cfg.w_crosskd * crosskd_loss(teacher, student, cfg);
  return total;
}

DistillGrads composite_sd_grad(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                               const DistillConfig& cfg) {
  check_pair(teacher, student);
  if (cfg.tau <= 0.0) throw std::invalid_argument("composite_sd_grad: tau must be positive");
  const double n = static_cast<double>(teacher.size());
  const auto nn = teacher.size();
  DistillGrads g;
  g.d_img = Mat::Zero(nn, teacher.img.cols());
  g.d_txt = Mat::Zero(nn, teacher.txt.cols());

  if (cfg.w_fd != 0.0) {
    g.d_img += cfg.w_fd * (2.0 / n) * (student.img - teacher.img);
    g.d_txt += cfg.w_fd * (2.0 / n) * (student.txt - teacher.txt);
  }

  if (cfg.w_crd != 0.0) {
    Mat p_t = softmax_rows(teacher.img * teacher.txt.transpose() / cfg.tau);
    Mat p_s = softmax_rows(student.img * student.txt.transpose() / cfg.tau);
    Mat q_t = softmax_rows(teacher.txt * teacher.img.transpose() / cfg.tau);
    Mat q_s = softmax_rows(student.txt * student.img.transpose() / cfg.tau);
    const double c = cfg.w_crd / (n * cfg.tau);
    Mat dp = p_s - p_t;
    Mat dq = q_s - q_t;
    g.d_img += c * (dp * student.txt + dq.transpose() * student.txt);
    g.d_txt += c * (dp.transpose() * student.img + dq * student.img);
  }

  if (cfg.w_icl != 0.0) {
    Mat p1 = softmax_rows(student.img * teacher.txt.transpose() / cfg.tau);
    Mat p2 = softmax_rows(student.txt * teacher.img.transpose() / cfg.tau);
    const double c = cfg.w_icl / (2.0 * n * cfg.tau);
    g.d_img += c * ((p1 - Mat::Identity(nn, nn)) * teacher.txt);
    g.d_txt += c * ((p2 - Mat::Identity(nn, nn)) * teacher.img);
  }

  if (cfg.w_crosskd != 0.0) {
    Mat p_t = softmax_rows(teacher.img * teacher.txt.transpose() / cfg.tau);
    Mat q_t = softmax_rows(teacher.txt * teacher.img.transpose() / cfg.tau);
    Mat p_x = softmax_rows(student.img * teacher.txt.transpose() / cfg.tau);
    Mat q_x = softmax_rows(student.txt * teacher.img.transpose() / cfg.tau);
    const double c = cfg.w_crosskd / (2.0 * n * cfg.tau);
    g.d_img += c * ((p_x - p_t) * teacher.txt);
    g.d_txt += c * ((q_x - q_t) * teacher.img);
  }
  return g;
}

double symmetric_infonce(const EmbeddingBatch& batch, double tau) {
  batch.validate();
  if (tau <= 0.0) throw std::invalid_argument("symmetric_infonce: tau must be positive");
  const double n = static_cast<double>(batch.size());
  Mat lp1 = log_softmax_rows(batch.img * batch.txt.transpose() / tau);
  Mat lp2 = log_softmax_rows(batch.txt * batch.img.transpose() / tau);
  return -(lp1.diagonal().sum() + lp2.diagonal().sum()) / (2.0 * n);
}

GradCheckReport distill_grad_check(const DistillConfig& cfg, int batch_size, int dim,
                                   std::uint64_t seed, double h) {
  if (batch_size < 2 || dim < 2)
    throw std::invalid_argument("distill_grad_check: need batch_size >= 2 and dim >= 2");
  Rng rng(seed);
  EmbeddingBatch teacher{rng.gaussian(batch_size, dim), rng.gaussian(batch_size, dim), false};
  EmbeddingBatch student{rng.gaussian(batch_size, dim), rng.gaussian(batch_size, dim), false};
  teacher = normalize_rows(teacher);
  student = normalize_rows(student);

  DistillGrads analytic = composite_sd_grad(teacher, student, cfg);

  double gmax = std::max(analytic.d_img.cwiseAbs().maxCoeff(),
                         analytic.d_txt.cwiseAbs().maxCoeff());
  GradCheckReport rep;

  auto probe = [&](Mat& field, const Mat& grad) {
    for (Eigen::Index i = 0; i < field.rows(); ++i) {
      for (Eigen::Index j = 0; j < field.cols(); ++j) {
        const double saved = field(i, j);
        field(i, j) = saved + h;
        const double up = composite_sd_loss(teacher, student, cfg);
        field(i, j) = saved - h;
        const double down = composite_sd_loss(teacher, student, cfg);
        field(i, j) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double a = grad(i, j);
        const double denom = std::max(std::abs(a) + std::abs(fd), 1e-6 * (1.0 + gmax));
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(a - fd) / denom);
      }
    }
  };
  probe(student.img, analytic.d_img);
  probe(student.txt, analytic.d_txt);
  return rep;
}

}  // namespace linft
