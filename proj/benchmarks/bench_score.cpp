#include <benchmark/benchmark.h>

#include "ordcfa/score.hpp"

using namespace ordcfa;

namespace {

void BM_PatternSweep(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const auto spec = single_factor_spec(p, 5);
  const auto ps = sumscore_params(spec, static_cast<double>(p));
  for (auto _ : state) {
    double sum = 0.0;
    pattern_sweep(spec, ps, [&](const SweepRow& r) { sum += r.map; });
    benchmark::DoNotOptimize(sum);
  }
}
BENCHMARK(BM_PatternSweep)->DenseRange(2, 5)->Unit(benchmark::kMillisecond);

}  // namespace
