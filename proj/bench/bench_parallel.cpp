// Serial reference loops against the OpenMP ones on the two evaluators the
// sampling stage uses. Arg is the thread count for the parallel variants,
// timed on the wall clock since the worker threads do the work.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "canalsense/parallel.hpp"
#include "canalsense/rb.hpp"
#include "canalsense/uq.hpp"

namespace {

using namespace canalsense;

struct Fixture {
  FullModel model{NominalConfig{}, build_grid(250.0, 75.0, 5.0, 5.0)};
  ReducedBasis rb = pod(model, collect_snapshots(model, table1_distributions(), 100, 1), 14);
  SampleMatrix rows = sample_matrix(table1_distributions(), 512, 7, SampleStream::design_first);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::span<const double> all_rows(const SampleMatrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

RowFunction reduced_fn() {
  const ReducedBasis* rb = &fixture().rb;
  return [rb](std::span<const double> row) { return reduced_output(*rb, params_from_row(row)); };
}

RowFunction full_fn() {
  const FullModel* model = &fixture().model;
  return [model](std::span<const double> row) { return (*model)(params_from_row(row)); };
}

void BM_reduced_serial(benchmark::State& state) {
  const auto f = reduced_fn();
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_rows_serial(all_rows(fixture().rows), kNumParams, f));
  state.SetItemsProcessed(state.iterations() * fixture().rows.rows());
}

void BM_reduced_parallel(benchmark::State& state) {
  const auto f = reduced_fn();
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate_rows_parallel(all_rows(fixture().rows), kNumParams, f, threads));
  state.SetItemsProcessed(state.iterations() * fixture().rows.rows());
}

// 32 full solves per iteration keep the run short.
constexpr std::size_t kFullRows = 32;

void BM_full_serial(benchmark::State& state) {
  const auto f = full_fn();
  const auto rows = all_rows(fixture().rows).first(kFullRows * kNumParams);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_rows_serial(rows, kNumParams, f));
  state.SetItemsProcessed(state.iterations() * kFullRows);
}

void BM_full_parallel(benchmark::State& state) {
  const auto f = full_fn();
  const auto rows = all_rows(fixture().rows).first(kFullRows * kNumParams);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_rows_parallel(rows, kNumParams, f, threads));
  state.SetItemsProcessed(state.iterations() * kFullRows);
}

void BM_for_each_index_serial(benchmark::State& state) {
  std::vector<double> out(1 << 16);
  for (auto _ : state) {
    for_each_index_serial(out.size(), [&](std::size_t i) { out[i] = std::sin(static_cast<double>(i)); });
    benchmark::ClobberMemory();
  }
}

void BM_for_each_index_parallel(benchmark::State& state) {
  std::vector<double> out(1 << 16);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    for_each_index_parallel(out.size(), [&](std::size_t i) { out[i] = std::sin(static_cast<double>(i)); }, threads);
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK(BM_reduced_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_reduced_parallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_full_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_full_parallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_for_each_index_serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_for_each_index_parallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
