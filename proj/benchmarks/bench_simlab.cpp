#include <benchmark/benchmark.h>

#include "metab/models.hpp"
#include "metab/rng.hpp"
#include "metab/simlab.hpp"

namespace {

void BM_TabulateFixed(benchmark::State& state) {
  const metab::DoublePareto dist(2.3, 1.1, 1.0);
  const auto grid = metab::topshare_fractile_grid();
  std::uint64_t stream = 0;
  for (auto _ : state) {
    metab::RngStream rng(42, stream++);
    auto tab = metab::tabulate_fixed_thresholds(dist, grid, state.range(), rng);
    benchmark::DoNotOptimize(tab);
  }
  state.SetItemsProcessed(state.iterations() * state.range());
}
BENCHMARK(BM_TabulateFixed)->Arg(10000)->Arg(100000);

void BM_DoubleParetoSample(benchmark::State& state) {
  const metab::DoublePareto dist(2.3, 1.1, 1.0);
  metab::RngStream rng(7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dist.sample(rng));
  }
}
BENCHMARK(BM_DoubleParetoSample);

}  // namespace
