#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ordcfa/estimate.hpp"
#include "ordcfa/likelihood.hpp"
#include "ordcfa/model.hpp"

namespace ordcfa {

enum class ResponseDistribution { Symmetric, Skewed, Middling };

std::string to_string(ResponseDistribution d);
ResponseDistribution parse_response_distribution(std::string_view name);

struct PopulationCondition {
  int indicators_per_factor = 6;
  /// Standardized loading magnitude.
  double loading = 0.8;
  int categories = 5;
  ResponseDistribution distribution = ResponseDistribution::Symmetric;
  /// Share of each factor's items given the sparse distribution; ignored
  /// for symmetric.
  double prop_sparse = 1.0;
  int factors = 3;
  /// Compound-symmetric factor correlation.
  double factor_correlation = 0.3;
};

/// Target marginal probabilities for one item. Symmetric: equal mass.
/// Skewed: the top category .04, the next .06, the rest split equally.
/// Middling: both extremes .05, the rest split equally. Throws DomainError
/// when the vector cannot be formed (e.g. skewed with K < 3).
Eigen::VectorXd category_probabilities(ResponseDistribution d, int categories);

/// Number of sparse items in a factor of n_q items.
int sparse_item_count(double prop_sparse, int factor_size);

ModelSpec population_spec(const PopulationCondition& cond);

/// Traditional-scale population: unit latent-response variances
/// (theta = 1 - lambda^2), kappa 0, Phi the correlation matrix, thresholds
/// at normal quantiles of the cumulative target probabilities.
ParameterSet make_population(const PopulationCondition& cond);

/// Draws eta ~ N(kappa, Phi), y* = nu + Lambda eta + e and cuts y* at the
/// thresholds. Deterministic in the seed.
ResponseMatrix generate_dataset(const ModelSpec& spec, const ParameterSet& pop,
                                int n, std::uint64_t seed);

/// Per-replication seed from (master, cell, replication).
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t cell,
                          std::uint64_t rep);

struct StudyCell {
  std::string name;
  PopulationCondition condition;
};

struct StudyConfig {
  std::vector<StudyCell> cells;
  int reps = 5;
  int sample_size = 500;
  std::uint64_t seed = 1;
  /// Quadrature nodes per dimension; 0 uses the default for the dimension.
  int nodes = 0;
  unsigned threads = 0;
  std::vector<Regime> regimes{Regime::Traditional, Regime::ReferenceIndicator,
                              Regime::Integer};
  std::vector<StartRegime> starts{StartRegime::Simple, StartRegime::Default};
  FitOptions fit;
};

struct FitRecord {
  int cell = 0;
  int rep = 0;
  Regime regime = Regime::Traditional;
  StartRegime start = StartRegime::Simple;
  bool converged = false;
  bool admissible = false;
  double loglik = 0.0;
  double deviance = 0.0;
  int iterations = 0;
  std::string message;
};

struct StudyLog {
  StudyConfig config;
  /// Ordered by cell, replication, start regime, constraint regime.
  std::vector<FitRecord> records;
};

/// Fits every regime from every start on every replication. Individual fit
/// failures are recorded, never thrown. `progress` (optional) is called
/// after each finished replication with (done, total).
StudyLog run_study(const StudyConfig& config,
                   const std::function<void(int, int)>& progress = {});

/// Deviance rounded to three decimals, the equality unit of the summaries.
double rounded_deviance(double deviance);

/// Best-fit attribution buckets over the traditional (UV),
/// reference-indicator (RI) and integer (I) regimes.
enum class FitBucket { All, RI, UV, I, RI_UV, RI_I, UV_I, NotComparable };
inline constexpr int kFitBucketCount = 8;
std::string to_string(FitBucket b);

/// Bucket for one replication: NotComparable unless all three regimes
/// converged admissibly; otherwise the regimes sharing the lowest rounded
/// deviance.
FitBucket attribute_best_fit(double dev_uv, double dev_ri, double dev_i,
                             bool comparable);

struct RegimeRates {
  int reps = 0;
  int converged = 0;
  int admissible = 0;
  int converged_admissible = 0;
  double convergence_rate() const { return reps ? double(converged) / reps : 0.0; }
  double admissible_rate() const { return reps ? double(admissible) / reps : 0.0; }
  double converged_admissible_rate() const {
    return reps ? double(converged_admissible) / reps : 0.0;
  }
};

struct CellSummary {
  int cell = 0;
  std::string name;
  StartRegime start = StartRegime::Simple;
  /// Indexed like StudyConfig::regimes.
  std::vector<RegimeRates> rates;
  /// Replications where every regime converged admissibly.
  int comparable = 0;
  /// Comparable replications with equal rounded deviances.
  int identical = 0;
  /// Comparable replications with a pairwise unrounded deviance gap of at
  /// least 1e-4.
  int fit_inequalities = 0;
  std::array<int, kFitBucketCount> buckets{};
  double identical_rate() const {
    return comparable ? double(identical) / comparable : 0.0;
  }
};

struct StudySummary {
  std::vector<CellSummary> cells;
};

StudySummary summarize(const StudyLog& log);

/// rates.csv, identical_fit.csv, best_fit.csv, replications.csv and
/// manifest.json under `dir` (created if missing). `inputs` holds
/// (name, content digest) pairs copied into the manifest.
void write_study_outputs(const StudyLog& log, const StudySummary& summary,
                         const std::filesystem::path& dir,
                         const std::vector<std::pair<std::string, std::string>>& inputs = {});

}  // namespace ordcfa
