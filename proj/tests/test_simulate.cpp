#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "ordcfa/errors.hpp"
#include "ordcfa/io.hpp"
#include "ordcfa/simulate.hpp"
#include "oracles.hpp"

using namespace ordcfa;

namespace {

StudyLog synthetic_log(int reps, const std::vector<double>& deviance_shift) {
  StudyLog log;
  log.config.cells = {{"synthetic", {}}};
  log.config.reps = reps;
  log.config.starts = {StartRegime::Simple};
  for (int rep = 0; rep < reps; ++rep)
    for (std::size_t r = 0; r < log.config.regimes.size(); ++r) {
      FitRecord f;
      f.rep = rep;
      f.regime = log.config.regimes[r];
      f.converged = true;
      f.admissible = true;
      f.deviance = 1000.0 + rep + (r == 2 ? deviance_shift[static_cast<std::size_t>(rep)] : 0.0);
      log.records.push_back(f);
    }
  return log;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("category probability vectors") {
  auto mid = category_probabilities(ResponseDistribution::Middling, 3);
  CHECK(mid(0) == doctest::Approx(0.05));
  CHECK(mid(1) == doctest::Approx(0.90));
  CHECK(mid(2) == doctest::Approx(0.05));
  auto skew = category_probabilities(ResponseDistribution::Skewed, 3);
  CHECK(skew(0) == doctest::Approx(0.90));
  CHECK(skew(1) == doctest::Approx(0.06));
  CHECK(skew(2) == doctest::Approx(0.04));
  auto sym = category_probabilities(ResponseDistribution::Symmetric, 4);
  CHECK(sym.isApproxToConstant(0.25));
  for (int K = 3; K <= 7; ++K)
    for (auto d : {ResponseDistribution::Symmetric, ResponseDistribution::Skewed,
                   ResponseDistribution::Middling})
      CHECK(category_probabilities(d, K).sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(category_probabilities(ResponseDistribution::Skewed, 2), DomainError);
}

TEST_CASE("population thresholds are normal quantiles") {
  PopulationCondition c;
  c.factors = 1;
  c.indicators_per_factor = 3;
  c.categories = 3;
  c.distribution = ResponseDistribution::Middling;
  auto pop = make_population(c);
  CHECK(pop.thresholds[0](0) == doctest::Approx(-1.6449).epsilon(1e-4));
  CHECK(pop.thresholds[0](1) == doctest::Approx(1.6449).epsilon(1e-4));
  CHECK(pop.thresholds[0](1) == doctest::Approx(oracle::quantile(0.95)).epsilon(1e-10));

  c.distribution = ResponseDistribution::Skewed;
  pop = make_population(c);
  CHECK(pop.thresholds[1](0) == doctest::Approx(1.2816).epsilon(1e-4));
  CHECK(pop.thresholds[1](1) == doctest::Approx(1.7507).epsilon(1e-4));

  c.categories = 4;
  c.distribution = ResponseDistribution::Symmetric;
  pop = make_population(c);
  CHECK(pop.thresholds[2](0) == doctest::Approx(-0.6745).epsilon(1e-4));
  CHECK(std::abs(pop.thresholds[2](1)) < 1e-12);
  CHECK(pop.thresholds[2](2) == doctest::Approx(0.6745).epsilon(1e-4));
  CHECK(pop.theta(0) == doctest::Approx(1.0 - c.loading * c.loading));
}

TEST_CASE("sparse item share") {
  CHECK(sparse_item_count(1.0, 6) == 6);
  CHECK(sparse_item_count(0.5, 3) == 2);
  CHECK(sparse_item_count(0.0, 6) == 0);
  CHECK(sparse_item_count(1.0 / 3.0, 6) == 2);
  CHECK_THROWS_AS(sparse_item_count(1.5, 6), DomainError);

  PopulationCondition c;
  c.factors = 1;
  c.indicators_per_factor = 4;
  c.categories = 3;
  c.distribution = ResponseDistribution::Middling;
  c.prop_sparse = 0.5;
  auto pop = make_population(c);
  CHECK(pop.thresholds[0](1) == doctest::Approx(1.6449).epsilon(1e-4));
  CHECK(pop.thresholds[3](1) == doctest::Approx(oracle::quantile(2.0 / 3.0)).epsilon(1e-10));
}

TEST_CASE("generated proportions follow the thresholds") {
  auto spec = single_factor_spec(2, 4);
  auto ps = ParameterSet::defaults(spec);
  ps.lambda.setZero();
  ps.thresholds[0] << -1.0, 0.2, 0.9;
  ps.thresholds[1] << -0.3, 0.0, 2.0;
  auto data = generate_dataset(spec, ps, 100000, 51);
  for (int j = 0; j < 2; ++j)
    for (int k = 1; k <= 4; ++k) {
      const double observed = (data.y.col(j).array() == k).cast<double>().mean();
      const long double up = k == 4 ? 1.0L : oracle::cdf(ps.thresholds[j](k - 1));
      const long double lo = k == 1 ? 0.0L : oracle::cdf(ps.thresholds[j](k - 2));
      CHECK(std::abs(observed - static_cast<double>(up - lo)) < 0.01);
    }
}

TEST_CASE("middling population extreme rates") {
  PopulationCondition c;
  c.factors = 1;
  c.indicators_per_factor = 3;
  c.categories = 3;
  c.loading = 0.4;
  c.distribution = ResponseDistribution::Middling;
  auto spec = population_spec(c);
  auto data = generate_dataset(spec, make_population(c), 100000, 52);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs((data.y.col(j).array() == 1).cast<double>().mean() - 0.05) < 0.01);
    CHECK(std::abs((data.y.col(j).array() == 3).cast<double>().mean() - 0.05) < 0.01);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  PopulationCondition c;
  auto spec = population_spec(c);
  auto pop = make_population(c);
  auto a = generate_dataset(spec, pop, 200, 9);
  auto b = generate_dataset(spec, pop, 200, 9);
  auto d = generate_dataset(spec, pop, 200, 10);
  CHECK(a.y == b.y);
  CHECK(a.y != d.y);
  CHECK(stream_seed(1, 2, 3) == stream_seed(1, 2, 3));
  CHECK(stream_seed(1, 2, 3) != stream_seed(1, 3, 2));
}

TEST_CASE("summary of identical fits") {
  auto log = synthetic_log(10, std::vector<double>(10, 0.0));
  auto s = summarize(log);
  REQUIRE(s.cells.size() == 1);
  CHECK(s.cells[0].comparable == 10);
  CHECK(s.cells[0].identical_rate() == 1.0);
  CHECK(s.cells[0].buckets[static_cast<int>(FitBucket::All)] == 10);
  for (const auto& r : s.cells[0].rates) CHECK(r.converged_admissible_rate() == 1.0);
}

TEST_CASE("summary with one differing replication") {
  std::vector<double> shift(10, 0.0);
  shift[4] = -0.5;
  auto s = summarize(synthetic_log(10, shift));
  CHECK(s.cells[0].identical_rate() == doctest::Approx(0.9));
  CHECK(s.cells[0].fit_inequalities == 1);
  CHECK(s.cells[0].buckets[static_cast<int>(FitBucket::I)] == 1);
  CHECK(std::accumulate(s.cells[0].buckets.begin(), s.cells[0].buckets.end(), 0) == 10);
}

TEST_CASE("best-fit attribution") {
  CHECK(attribute_best_fit(1, 1, 1, true) == FitBucket::All);
  CHECK(attribute_best_fit(1, 1, 1, false) == FitBucket::NotComparable);
  CHECK(attribute_best_fit(2, 1, 1, true) == FitBucket::RI_I);
  CHECK(attribute_best_fit(1, 2, 1, true) == FitBucket::UV_I);
  CHECK(attribute_best_fit(1, 1, 2, true) == FitBucket::RI_UV);
  CHECK(attribute_best_fit(1, 2, 2, true) == FitBucket::UV);
  CHECK(attribute_best_fit(2, 1, 2, true) == FitBucket::RI);
  CHECK(attribute_best_fit(2, 2, 1, true) == FitBucket::I);
  CHECK(attribute_best_fit(1000.0001, 1000.0002, 1000.0, true) == FitBucket::All);
  CHECK(rounded_deviance(12.34567) == doctest::Approx(12.346));
}

TEST_CASE("smoke study bookkeeping and determinism") {
  StudyConfig cfg;
  PopulationCondition easy;
  easy.factors = 1;
  easy.indicators_per_factor = 4;
  easy.categories = 4;
  PopulationCondition skew = easy;
  skew.distribution = ResponseDistribution::Skewed;
  skew.categories = 3;
  cfg.cells = {{"easy", easy}, {"skewed", skew}};
  cfg.reps = 5;
  cfg.sample_size = 200;
  cfg.seed = 3;
  cfg.nodes = 21;
  cfg.threads = 1;
  int calls = 0;
  auto log = run_study(cfg, [&](int done, int total) {
    ++calls;
    CHECK(done <= total);
  });
  CHECK(log.records.size() == 2u * 5u * 3u * 2u);
  CHECK(calls == 10);
  auto summary = summarize(log);
  CHECK(summary.cells.size() == 4);
  for (int k = 0; k < 2; ++k) {
    for (const auto& r : summary.cells[k].rates) CHECK(r.converged_admissible_rate() == 1.0);
    CHECK(summary.cells[k].identical_rate() == 1.0);
  }

  auto dir = std::filesystem::temp_directory_path() / "ordcfa_test_study";
  std::filesystem::remove_all(dir);
  write_study_outputs(log, summary, dir / "a");
  cfg.threads = 2;
  auto again = run_study(cfg);
  write_study_outputs(again, summarize(again), dir / "b");
  for (const char* f : {"rates.csv", "identical_fit.csv", "best_fit.csv", "replications.csv",
                        "manifest.json"}) {
    CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    CHECK_FALSE(slurp(dir / "a" / f).empty());
  }
  auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest.dump().find("\"reps\":5") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("distribution names") {
  for (auto d : {ResponseDistribution::Symmetric, ResponseDistribution::Skewed,
                 ResponseDistribution::Middling})
    CHECK(parse_response_distribution(to_string(d)) == d);
  CHECK_THROWS_AS(parse_response_distribution("bimodal"), SpecError);
}
