#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "rfpca/mm_estimator.hpp"
#include "rfpca/naive_estimator.hpp"
#include "rfpca/robust.hpp"
#include "rfpca/simulation.hpp"

using namespace rfpca;

namespace {

sim::Sample lrs_sample(int n, int p) {
  auto sc = sim::lrs_like();
  sc.n = n;
  sc.p = p;
  return sim::generate_sample(sc, 7);
}

void BM_QnDispersion(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<double> xs(static_cast<std::size_t>(state.range(0)));
  for (double& x : xs) x = z(rng);
  for (auto _ : state) benchmark::DoNotOptimize(robust::qn_dispersion(xs));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_QnDispersion)->RangeMultiplier(4)->Range(64, 16384)->Complexity(benchmark::oNLogN);

void BM_TauScale(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  std::vector<double> xs(static_cast<std::size_t>(state.range(0)));
  for (double& x : xs) x = z(rng);
  for (auto _ : state) benchmark::DoNotOptimize(robust::tau_scale(xs));
}
BENCHMARK(BM_TauScale)->Arg(100)->Arg(1000);

void BM_FitMm(benchmark::State& state) {
  const auto s = lrs_sample(static_cast<int>(state.range(0)), 50);
  const auto data = decimate(s.data, state.range(1) / 100.0, 3);
  for (auto _ : state) benchmark::DoNotOptimize(mm::fit_mm(data));
}
BENCHMARK(BM_FitMm)->Args({100, 100})->Args({100, 50})->Args({200, 100})->Unit(benchmark::kMillisecond);

void BM_FitNaive(benchmark::State& state) {
  const auto s = lrs_sample(static_cast<int>(state.range(0)), 50);
  for (auto _ : state) benchmark::DoNotOptimize(naive::fit_naive(s.data));
}
BENCHMARK(BM_FitNaive)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
