#include <benchmark/benchmark.h>

#include "metab/mecore.hpp"
#include "metab/models.hpp"
#include "metab/smoothing.hpp"
#include "metab/tabio.hpp"

#include <vector>

namespace {

metab::BinMoments exp_moments(int bins) {
  metab::Exponential dist(1.0);
  std::vector<double> thresholds;
  for (int i = bins - 1; i >= 1; --i) {
    thresholds.push_back(dist.quantile(i / double(bins)));
  }
  thresholds.push_back(0.0);
  return metab::population_moments(dist, thresholds);
}

void BM_SolveLambda(benchmark::State& state) {
  for (auto _ : state) {
    auto sol = metab::solve_lambda(0.0, 1.0, 0.37);
    benchmark::DoNotOptimize(sol);
  }
}
BENCHMARK(BM_SolveLambda);

void BM_FitDensity(benchmark::State& state) {
  const auto moments = exp_moments(state.range());
  for (auto _ : state) {
    auto fit = metab::fit_me_density(moments);
    benchmark::DoNotOptimize(fit);
  }
  state.SetComplexityN(state.range());
}
BENCHMARK(BM_FitDensity)->Arg(18)->Arg(50)->Complexity();

void BM_SmoothThresholds(benchmark::State& state) {
  const auto moments = exp_moments(state.range());
  for (auto _ : state) {
    auto fit = metab::smooth_thresholds(moments, 0.0);
    benchmark::DoNotOptimize(fit);
  }
}
BENCHMARK(BM_SmoothThresholds)->Arg(18)->Arg(50);

}  // namespace
