#include <benchmark/benchmark.h>

#include "linft/distill.hpp"
#include "linft/gd.hpp"
#include "linft/rng.hpp"
#include "linft/teacher.hpp"

using namespace linft;

namespace {

FinetuneInstance bench_instance(int d, int n, int p) {
  Rng rng(1);
  FinetuneInstance inst;
  inst.x_img = rng.gaussian(d, n);
  inst.x_txt = rng.gaussian(4, n, 0.25);
  inst.w_img0 = rng.gaussian(p, d);
  inst.w_txt0 = rng.gaussian(p, 4);
  return inst;
}

}  // namespace

static void BM_Pinv(benchmark::State& state) {
  Rng rng(2);
  Mat a = rng.gaussian(state.range(0), state.range(0));
  for (auto _ : state) {
    Mat ap = pinv(a);
    benchmark::DoNotOptimize(ap);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Pinv)->RangeMultiplier(2)->Range(8, 128)->Complexity();

static void BM_TargetProblemBuild(benchmark::State& state) {
  FinetuneInstance inst = bench_instance(state.range(0), state.range(0) / 2, 16);
  for (auto _ : state) {
    TargetProblem prob = TargetProblem::build(inst);
    benchmark::DoNotOptimize(prob);
  }
}
BENCHMARK(BM_TargetProblemBuild)->Arg(16)->Arg(32)->Arg(64);

static void BM_GdSolveDirect(benchmark::State& state) {
  FinetuneInstance inst = bench_instance(24, 12, 12);
  TargetProblem prob = TargetProblem::build(inst);
  QuadProgram q = direct_ft_program(prob, inst.x_img);
  GdConfig cfg;
  cfg.step = max_step(q);
  for (auto _ : state) {
    GdResult r = gd_solve(q, inst.w_img0, cfg);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_GdSolveDirect);

static void BM_SdwmaRun(benchmark::State& state) {
  FinetuneInstance inst = bench_instance(24, 12, 12);
  TargetProblem prob = TargetProblem::build(inst);
  TimeGrid grid{static_cast<int>(state.range(0)), 0.5, 1.0};
  for (auto _ : state) {
    SdwmaTrajectory traj =
        run_sdwma(prob, inst.w_img0, 1.0, KernelSpec{BetaKernel{0.5, 0.5}}, grid, 1);
    benchmark::DoNotOptimize(traj);
  }
}
BENCHMARK(BM_SdwmaRun)->Arg(100)->Arg(500);

static void BM_CompositeDistill(benchmark::State& state) {
  Rng rng(3);
  const int n = static_cast<int>(state.range(0));
  EmbeddingBatch teacher{rng.gaussian(n, 16), rng.gaussian(n, 16), false};
  EmbeddingBatch student{rng.gaussian(n, 16), rng.gaussian(n, 16), false};
  teacher = normalize_rows(teacher);
  student = normalize_rows(student);
  DistillConfig cfg;
  cfg.tau = 0.5;
  for (auto _ : state) {
    const double loss = composite_sd_loss(teacher, student, cfg);
    DistillGrads g = composite_sd_grad(teacher, student, cfg);
    benchmark::DoNotOptimize(loss);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_CompositeDistill)->RangeMultiplier(2)->Range(16, 128);

BENCHMARK_MAIN();
