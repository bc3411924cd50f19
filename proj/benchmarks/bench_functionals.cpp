#include <benchmark/benchmark.h>

#include "metab/functionals.hpp"
#include "metab/mecore.hpp"
#include "metab/models.hpp"
#include "metab/tabio.hpp"

namespace {

metab::MEDensity exp_fit(int bins) {
  metab::Exponential dist(1.0);
  std::vector<double> thresholds;
  for (int i = bins - 1; i >= 1; --i) {
    thresholds.push_back(dist.quantile(i / double(bins)));
  }
  thresholds.push_back(0.0);
  return metab::fit_me_density(metab::population_moments(dist, thresholds));
}

void BM_Ccdf(benchmark::State& state) {
  const auto d = exp_fit(22);
  double y = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(metab::ccdf(d, y));
    y = y < 5.0 ? y + 0.01 : 0.0;
  }
}
BENCHMARK(BM_Ccdf);

void BM_Quantile(benchmark::State& state) {
  const auto d = exp_fit(22);
  double tau = 0.01;
  for (auto _ : state) {
    benchmark::DoNotOptimize(metab::quantile(d, tau));
    tau = tau < 0.99 ? tau + 0.001 : 0.01;
  }
}
BENCHMARK(BM_Quantile);

void BM_Gini(benchmark::State& state) {
  const auto d = exp_fit(state.range());
  for (auto _ : state) {
    benchmark::DoNotOptimize(metab::gini(d));
  }
}
BENCHMARK(BM_Gini)->Arg(18)->Arg(50);

}  // namespace
