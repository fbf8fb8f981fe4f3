#include <benchmark/benchmark.h>

#include "ordcfa/estimate.hpp"
#include "ordcfa/likelihood.hpp"
#include "ordcfa/simulate.hpp"

using namespace ordcfa;

namespace {

struct Problem {
  ModelSpec spec;
  ParameterSet params;
  ResponseMatrix data;
};

Problem problem(int factors, int n) {
  PopulationCondition cond;
  cond.factors = factors;
  cond.indicators_per_factor = 6;
  cond.categories = 5;
  auto spec = population_spec(cond);
  auto pop = make_population(cond);
  auto data = generate_dataset(spec, pop, n, 17);
  return {spec, pop, data};
}

void BM_MarginalLoglik(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const auto p = problem(m, 500);
  const MarginalLikelihood ml(p.spec, p.data, default_grid(m));
  for (auto _ : state) benchmark::DoNotOptimize(ml.value(p.params));
  state.counters["patterns"] = static_cast<double>(ml.patterns().counts.size());
}
BENCHMARK(BM_MarginalLoglik)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

void BM_MarginalGradient(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const auto p = problem(m, 500);
  const MarginalLikelihood ml(p.spec, p.data, default_grid(m));
  Eigen::VectorXd g;
  for (auto _ : state) benchmark::DoNotOptimize(ml.value_and_gradient(p.params, g));
}
BENCHMARK(BM_MarginalGradient)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

void BM_FitIntegerOneFactor(benchmark::State& state) {
  const auto p = problem(1, static_cast<int>(state.range(0)));
  const auto cs = make_constraints(p.spec, Regime::Integer);
  const auto start = starting_values(p.spec, p.data, cs, StartRegime::Simple);
  const auto grid = default_grid(1);
  for (auto _ : state) benchmark::DoNotOptimize(fit_mml(p.spec, p.data, cs, start, grid).loglik);
}
BENCHMARK(BM_FitIntegerOneFactor)->Arg(500)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
