// Parallel kernels against their serial references, and the three objective
// evaluators against each other. Thread count is the second range argument
// where it applies; DCSYSID_THREADS is ignored here.

#include <benchmark/benchmark.h>

#include "dcsysid/kernel.hpp"
#include "dcsysid/likelihood.hpp"
#include "dcsysid/maxent.hpp"
#include "dcsysid/parallel.hpp"
#include "dcsysid/rng.hpp"

using namespace dcsysid;

namespace {

const DcHyperparams kHyper{1.0, 0.9, 0.8};

PreprocessedData random_problem(Index n, Index samples, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd phi_t(samples, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < samples; ++i) phi_t(i, j) = rng.normal();
  Eigen::VectorXd y(samples);
  for (Index i = 0; i < samples; ++i) y(i) = rng.normal();
  return preprocess(phi_t, y);
}

std::vector<DcHyperparams> grid(int count) {
  std::vector<DcHyperparams> points;
  for (int k = 0; k < count; ++k)
    points.push_back({1.0, 0.5 + 0.49 * (k + 0.5) / count, -0.9 + 1.8 * ((k * 7) % count + 0.5) / count});
  return points;
}

PartialBandMatrix dc_band(Index n, Index m) {
  return PartialBandMatrix::from_dense(build_dc_kernel(kHyper, n).entries(), m);
}

}  // namespace

static void BM_DcKernelSerial(benchmark::State& state) {
  const Index n = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(reference::build_dc_kernel_serial(kHyper, n));
}
BENCHMARK(BM_DcKernelSerial)->Arg(125)->Arg(500)->Arg(2000);

static void BM_DcKernelParallel(benchmark::State& state) {
  parallel::set_thread_count(static_cast<int>(state.range(1)));
  const Index n = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(build_dc_kernel(kHyper, n));
  parallel::set_thread_count(1);
}
BENCHMARK(BM_DcKernelParallel)->ArgsProduct({{125, 500, 2000}, {1, 2, 4}});

static void BM_CentralExtensionSerial(benchmark::State& state) {
  const PartialBandMatrix p = dc_band(state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(reference::central_extension_serial(p));
}
BENCHMARK(BM_CentralExtensionSerial)->Arg(50)->Arg(200);

static void BM_CentralExtensionParallel(benchmark::State& state) {
  parallel::set_thread_count(static_cast<int>(state.range(1)));
  const PartialBandMatrix p = dc_band(state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(central_extension(p));
  parallel::set_thread_count(1);
}
BENCHMARK(BM_CentralExtensionParallel)->ArgsProduct({{50, 200}, {1, 2, 4}});

static void BM_EvaluateBatchSerial(benchmark::State& state) {
  const PreprocessedData pre = random_problem(50, 500, 1);
  const std::vector<DcHyperparams> points = grid(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::evaluate_batch_serial(points, 0.2, pre));
}
BENCHMARK(BM_EvaluateBatchSerial)->Arg(64);

static void BM_EvaluateBatchParallel(benchmark::State& state) {
  parallel::set_thread_count(static_cast<int>(state.range(1)));
  const PreprocessedData pre = random_problem(50, 500, 1);
  const std::vector<DcHyperparams> points = grid(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_batch(points, 0.2, pre));
  parallel::set_thread_count(1);
}
BENCHMARK(BM_EvaluateBatchParallel)->ArgsProduct({{64}, {1, 2, 4}});

template <ObjectiveEvaluation (*Fn)(const DcHyperparams&, double, const PreprocessedData&)>
static void BM_Objective(benchmark::State& state) {
  const PreprocessedData pre = random_problem(state.range(0), 4 * state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(kHyper, 0.2, pre).value);
}
BENCHMARK_TEMPLATE(BM_Objective, nll_algorithm_a)->Name("BM_ObjectiveA")->Arg(32)->Arg(125)->Arg(250);
BENCHMARK_TEMPLATE(BM_Objective, nll_algorithm_b)->Name("BM_ObjectiveB")->Arg(32)->Arg(125)->Arg(250);
BENCHMARK_TEMPLATE(BM_Objective, nll_algorithm_c)->Name("BM_ObjectiveC")->Arg(32)->Arg(125)->Arg(250);
BENCHMARK_TEMPLATE(BM_Objective, reference::nll_algorithm_c_dense)
    ->Name("BM_ObjectiveCDenseQr")
    ->Arg(32)
    ->Arg(125)
    ->Arg(250);
BENCHMARK_MAIN();
