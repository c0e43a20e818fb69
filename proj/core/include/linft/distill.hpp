#pragma once

#include "linft/mat.hpp"

#include <cstdint>

namespace linft {

/// A batch of paired embeddings, one row per example. Losses are computed on
/// the rows exactly as given; callers normalize first when they want the
/// unit-sphere convention.
struct EmbeddingBatch {
  Mat img;  // N x p
  Mat txt;  // N x p
  bool normalized = false;

  Eigen::Index size() const { return img.rows(); }
  void validate() const;
};

/// Returns a copy with every row scaled to unit Euclidean norm.
EmbeddingBatch normalize_rows(const EmbeddingBatch& batch);

struct DistillConfig {
  double tau = 1.0;  // softmax temperature
  double w_fd = 1.0;
  double w_crd = 1.0;
  double w_icl = 1.0;
  double w_crosskd = 1.0;
  double lambda_sd = 1.0;  // outer coefficient on the composite loss
};

/// Mean squared embedding distance over both modalities.
double fd_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student);

/// KL between the teacher's and student's own similarity softmax rows,
/// image-to-text plus text-to-image, averaged with 1/N.
double crd_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                const DistillConfig& cfg);

/// Symmetric InfoNCE with student anchors against teacher keys, 1/(2N).
double icl_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                const DistillConfig& cfg);

/// KL from the teacher's self-modal rows to the student-to-teacher
/// cross-modal rows, averaged with 1/(2N).
double crosskd_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                    const DistillConfig& cfg);

/// Weighted sum of the four components; unit weights reproduce the plain
/// FD + CRD + ICL + CrossKD total.
double composite_sd_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                         const DistillConfig& cfg);

/// Gradients of the weighted composite with respect to the student
/// embeddings (teacher rows are constants).
struct DistillGrads {
  Mat d_img;  // N x p
  Mat d_txt;  // N x p
};
DistillGrads composite_sd_grad(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                               const DistillConfig& cfg);

/// Symmetric InfoNCE of a batch against itself; the value icl_loss takes at
/// student == teacher.
double symmetric_infonce(const EmbeddingBatch& batch, double tau);

struct GradCheckReport {
  double max_rel_err = 0.0;
};

/// Central finite differences of composite_sd_loss against the analytic
/// gradient at a random normalized batch; h is the probe step.
GradCheckReport distill_grad_check(const DistillConfig& cfg, int batch_size, int dim,
                                   std::uint64_t seed, double h = 1e-5);

}  // namespace linft
