#include <benchmark/benchmark.h>

#include "ordcfa/identification.hpp"
#include "ordcfa/transform.hpp"

using namespace ordcfa;

namespace {

void BM_TradToInteger(benchmark::State& state) {
  const auto spec = clustered_spec(std::vector<int>(static_cast<std::size_t>(state.range(0)), 6), 5);
  auto ps = random_traditional_parameters(spec, 3);
  apply_fixes(ps, make_constraints(spec, Regime::Traditional));
  for (auto _ : state) benchmark::DoNotOptimize(trad_to_integer(ps, spec).residual);
}
BENCHMARK(BM_TradToInteger)->Arg(1)->Arg(3);

void BM_ConvertToReferenceIndicator(benchmark::State& state) {
  const auto spec = clustered_spec({6, 6, 6}, 5);
  const auto ps = random_traditional_parameters(spec, 4);
  const auto target = make_constraints(spec, Regime::ReferenceIndicator);
  for (auto _ : state) benchmark::DoNotOptimize(convert(ps, spec, target).residual);
}
BENCHMARK(BM_ConvertToReferenceIndicator);

void BM_VerifyIdentification(benchmark::State& state) {
  const auto spec = clustered_spec({3, 3, 3}, 4);
  const auto cs = make_constraints(spec, Regime::Integer);
  for (auto _ : state) benchmark::DoNotOptimize(verify_identification(spec, cs).verdict);
}
BENCHMARK(BM_VerifyIdentification)->Unit(benchmark::kMillisecond);

}  // namespace
