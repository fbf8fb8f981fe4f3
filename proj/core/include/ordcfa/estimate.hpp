#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

#include "ordcfa/likelihood.hpp"
#include "ordcfa/model.hpp"
#include "ordcfa/quadrature.hpp"

namespace ordcfa {

enum class StartRegime { Simple, Default };

std::string to_string(StartRegime r);
StartRegime parse_start_regime(std::string_view name);

struct StartValues {
  StartRegime regime = StartRegime::Simple;
  /// Heuristic values before projection.
  ParameterSet raw;
  /// Projected onto the active constraints; the optimizer starts here.
  ParameterSet realized;
};

/// Simple: loadings 0.7, residual and latent variances 1, everything else 0
/// (zero thresholds become unit-spaced steps centered at 0).
ParameterSet simple_start(const ModelSpec& spec);

/// Default: thresholds at normal quantiles of cumulative proportions
/// (clamped to [1/(2n), 1 - 1/(2n)]), residual variances at half the sample
/// variance of the codes, latent variances 0.05, loadings from the first
/// principal component of each factor's inter-item correlations.
ParameterSet default_start(const ModelSpec& spec, const ResponseMatrix& data);

/// Moves a parameter set onto the constraints. Minimal regimes are reached
/// by an equivalence transform (so the implied distribution is unchanged);
/// otherwise fixed entries are overwritten. Throws DomainError when the
/// result is not a valid parameter set.
ParameterSet project_onto_constraints(const ParameterSet& raw,
                                      const ModelSpec& spec,
                                      const ConstraintSet& constraints);

StartValues starting_values(const ModelSpec& spec, const ResponseMatrix& data,
                            const ConstraintSet& constraints,
                            StartRegime regime);

struct FitOptions {
  int max_iterations = 500;
  /// Max-norm of the gradient of the mean log-likelihood in reduced
  /// coordinates.
  double gradient_tolerance = 1e-5;
  /// Line-search steps shorter than this (max-norm) end the search.
  double step_tolerance = 1e-8;
  /// Largest max-norm step in reduced coordinates.
  double max_step = 1.0;
  /// Newton refinement with a finite-difference Hessian after BFGS.
  bool polish = false;
  double polish_tolerance = 1e-10;
  int polish_iterations = 25;
};

struct FitResult {
  ParameterSet params;
  Regime regime = Regime::Traditional;
  double loglik = 0.0;
  bool converged = false;
  bool admissible = false;
  std::vector<std::string> admissibility_reasons;
  int iterations = 0;
  double constraint_residual = 0.0;
  double gradient_norm = 0.0;
  int free_parameters = 0;
  int respondents = 0;
  std::string message;
  std::vector<std::string> warnings;
};

/// Marginal ML under the constraints via quasi-Newton ascent on the reduced
/// coordinates. Non-convergence is reported in the result, not thrown.
FitResult fit_mml(const ModelSpec& spec, const ResponseMatrix& data,
                  const ConstraintSet& constraints, const StartValues& start,
                  const QuadratureGrid& grid, const FitOptions& options = {});

struct Admissibility {
  bool admissible = true;
  std::vector<std::string> reasons;
};

/// Nonnegative residual and latent variances and a positive definite latent
/// covariance matrix (smallest eigenvalue > -1e-10).
Admissibility admissibility_check(const ParameterSet& params);
Admissibility admissibility_check(const FitResult& result);

struct FitStatistics {
  double deviance = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int free_parameters = 0;
};

/// Free parameters = total parameters - constraint count.
int free_parameter_count(const ModelSpec& spec, const ConstraintSet& constraints);
FitStatistics fit_statistics(double loglik, int free_parameters, int respondents);
FitStatistics fit_statistics(const FitResult& result);

struct StandardizedSolution {
  /// lambda * sqrt(phi_qq) / sqrt(lambda^2 phi_qq + theta)
  Eigen::MatrixXd loadings;
  /// theta / total latent-response variance
  Eigen::VectorXd residual_variances;
  /// (tau - nu - lambda kappa) / total standard deviation
  std::vector<Eigen::VectorXd> thresholds;
  Eigen::MatrixXd latent_correlation;
};

/// Completely standardized solution. Throws DomainError on zero total
/// variance.
StandardizedSolution standardize(const ParameterSet& params,
                                 const ModelSpec& spec);

struct LikelihoodRatioTest {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  FitResult full;       // integer constraints
  FitResult restricted; // sum-score constraints with free latent mean/variance
};

/// Compares the integer-constrained model with the sum-score model (unit
/// loadings, integer-spaced thresholds, zero intercepts, unit residual
/// variances; latent mean and covariance estimated). Throws
/// ConvergenceError when either fit fails to converge.
LikelihoodRatioTest sumscore_lr_test(const ModelSpec& spec,
                                     const ResponseMatrix& data,
                                     const QuadratureGrid& grid,
                                     const FitOptions& options = {});

double chi_square_sf(double x, double df);

}  // namespace ordcfa
