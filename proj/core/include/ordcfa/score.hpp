#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ordcfa/likelihood.hpp"
#include "ordcfa/model.hpp"

namespace ordcfa {

struct ScoreOptions {
  /// Newton iterations stop when the max-norm step falls below this.
  double tolerance = 1e-8;
  int max_iterations = 200;
  /// ML search box: kappa +/- bound_sds * sqrt(phi_qq).
  double bound_sds = 10.0;
};

/// Maximum a posteriori latent prediction (safeguarded Newton from kappa).
/// Throws ConvergenceError when the iteration limit is reached.
LatentState map_score(const ParameterSet& params, const ModelSpec& spec,
                      const Eigen::Ref<const Eigen::VectorXi>& row,
                      const ScoreOptions& options = {});

struct MlScore {
  LatentState eta;
  /// The conditional likelihood keeps increasing at the search box.
  bool diverged = false;
  /// Per factor: +1 / -1 when the maximizer sits on the upper / lower bound
  /// with the gradient pointing outward, else 0.
  Eigen::VectorXi direction;
};

/// Maximizes the conditional likelihood inside the search box. Divergence is
/// a returned state, not an error.
MlScore ml_score(const ParameterSet& params, const ModelSpec& spec,
                 const Eigen::Ref<const Eigen::VectorXi>& row,
                 const ScoreOptions& options = {});

/// Arithmetic mean of the integer codes.
double observed_average(const Eigen::Ref<const Eigen::VectorXi>& row);

/// Sum-score parameters for a spec with equal category counts per factor:
/// unit loadings, thresholds 1.5..K-0.5, zero intercepts, unit residual
/// variances, kappa = (K+1)/2 and Phi diagonal from `variance` (default:
/// the factor's item count), zero latent covariances.
ParameterSet sumscore_params(const ModelSpec& spec,
                             std::optional<double> variance = std::nullopt);

enum class ScoreMethod { Map, Ml };
std::string to_string(ScoreMethod m);
ScoreMethod parse_score_method(std::string_view name);

struct RowScore {
  double average = 0.0;
  LatentState eta;
  bool diverged = false;
  Eigen::VectorXi direction;
};

/// Scores every row; identical response patterns are scored once. Work is
/// split over `threads` (0 = hardware concurrency).
std::vector<RowScore> score_rows(const ParameterSet& params,
                                 const ModelSpec& spec,
                                 const ResponseMatrix& data, ScoreMethod method,
                                 const ScoreOptions& options = {},
                                 unsigned threads = 0);

struct SweepRow {
  std::vector<int> pattern;
  double average = 0.0;
  double map = 0.0;
  double ml = 0.0;
  bool ml_diverged = false;
  int ml_direction = 0;
  /// The pattern contains the lowest or highest category.
  bool extreme = false;
  /// d/d eta of the conditional log-likelihood at eta = average.
  double gradient_at_average = 0.0;
};

struct SweepOptions {
  /// Largest number of enumerated patterns.
  double cap = 1e7;
  ScoreOptions score;
};

/// Enumerates all response patterns of a one-factor spec with equal
/// category counts, in lexicographic order, passing each to `visit`.
/// Throws SpecError when K^p exceeds the cap (use sampling instead).
void pattern_sweep(const ModelSpec& spec, const ParameterSet& params,
                   const std::function<void(const SweepRow&)>& visit,
                   const SweepOptions& options = {});

std::vector<SweepRow> pattern_sweep(const ModelSpec& spec,
                                    const ParameterSet& params,
                                    const SweepOptions& options = {});

/// Sum over items and categories of k P(Y_j = k | eta), divided by p.
double expected_average(const ParameterSet& params, const ModelSpec& spec,
                        const LatentState& eta);
std::vector<double> expected_average_curve(const ParameterSet& params,
                                           const ModelSpec& spec,
                                           const std::vector<double>& etas);

/// CSV with header p,pattern,average,map,ml,ml_flag,extreme,gradient_at_average.
/// The pattern column joins codes without separators when every K < 10,
/// otherwise with '-'.
void write_sweep_header(std::ostream& out);
void write_sweep_row(std::ostream& out, const SweepRow& row);
void write_curve_csv(std::ostream& out, const std::vector<double>& etas,
                     const std::vector<double>& values);

}  // namespace ordcfa
