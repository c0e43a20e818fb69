#pragma once

#include "linft/closed_form.hpp"
#include "linft/distill.hpp"
#include "linft/teacher.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace linft {

/// Synthetic two-phase task family. Image features are a class-informative
/// core block plus a spurious block; during pretraining the spurious block
/// is pure noise, during finetuning the class signal moves into the spurious
/// block (aligned with the label with probability spurious_corr) while the
/// core block carries only noise. Text features are fixed one-hot class
/// prototypes shared by both phases.
struct SyntheticTask {
  int core_dim = 16;
  int spurious_dim = 8;
  int n_classes = 4;
  double spurious_corr = 0.95;
  int n_train = 512;
  int n_eval = 2048;
  std::uint64_t seed = 1;
  double noise_sigma = 0.1;
  int embed_dim = 8;

  void validate() const;
};

struct TaskData {
  Mat x_img;                // d_img x n
  Mat x_txt;                // d_txt x n (prototype of the label per column)
  std::vector<int> labels;  // n, balanced round-robin
};

struct GeneratedTasks {
  TaskData pretrain;
  TaskData finetune;
  TaskData eval_original;  // pretraining distribution, fresh draws
  TaskData eval_new;       // finetuning distribution, fresh draws
  Mat prototypes;          // d_txt x n_classes
  Mat w_txt0;              // embed_dim x d_txt, frozen text encoder
  int d_img = 0;
  int d_txt = 0;
};

GeneratedTasks generate_tasks(const SyntheticTask& spec);

/// Classification by image-text similarity against the class prototypes;
/// argmax over classes, ties broken toward the lowest index. Returns percent
/// correct in [0, 100].
double zero_shot_accuracy(const Mat& w_img, const Mat& w_txt, const TaskData& data,
                          const Mat& prototypes);

/// Pretrained image encoder: the closed-form least-squares optimum of the
/// pretraining problem from a zero initialization. Zero pairs give the zero
/// encoder.
Mat pretrain_linear(const GeneratedTasks& tasks, SvdTolerance tol = {});

/// Absolute percentage-point drop acc_pre - acc_post (negative when
/// finetuning helps). Inputs must lie in [0, 100].
double forgetting_rate(double acc_pre, double acc_post);

enum class StrategyKind { Pretrained, DirectFT, L2Reg, StaticSD, DynamicSD, TracerToy };
const char* strategy_kind_name(StrategyKind s);

struct StrategyRun {
  StrategyKind strategy = StrategyKind::DirectFT;
  double lambda = 1.0;
  // Teacher weighting. Unset means the strategy default: the mean-teacher
  // EmaEquivalent(ema_rho) kernel for DynamicSD, Beta(0.5, 0.5) for TracerToy.
  std::optional<KernelSpec> kernel;
  int dsd_horizon = 3;               // DynamicSD teacher steps
  int update_every = 1;
  int tracer_iters = 1500;
  int tracer_batch = 64;
  double ema_rho = 0.9;              // comparison teacher for gap metrics
  DistillConfig distill;
  bool keep_trajectory = false;
};

struct RunMetrics {
  double acc_original = 0.0;
  double acc_new = 0.0;
  double forgetting = 0.0;          // against the pretrained encoder
  double teacher_gap_wma = 0.0;     // ||W_teacher - W_student||_F at the end
  double teacher_gap_ema = 0.0;     // matched EMA teacher on the same path
  std::optional<SdwmaTrajectory> trajectory;
};

/// Runs one strategy on the finetuning task starting from pre_weights and
/// evaluates both phases. Closed-form strategies use their exact solutions;
/// DynamicSD runs the teacher recursion; TracerToy runs the full training
/// loop (plain GD over the least-squares loss plus the weighted composite
/// distillation against a WMA teacher, embeddings normalized per step).
RunMetrics run_strategy(const StrategyRun& run, const GeneratedTasks& tasks,
                        const Mat& pre_weights);

struct ParetoRow {
  StrategyKind strategy = StrategyKind::Pretrained;
  double acc_original = 0.0;
  double acc_new = 0.0;
  double forgetting = 0.0;
  bool pareto_optimal = false;
};

/// Sorts rows by strategy enum order and marks rows not dominated by any
/// other (dominance: >= on both accuracies, > on at least one).
std::vector<ParetoRow> pareto_table(const std::vector<std::pair<StrategyKind, RunMetrics>>& runs);

}  // namespace linft
