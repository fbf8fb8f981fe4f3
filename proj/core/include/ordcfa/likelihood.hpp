#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "ordcfa/model.hpp"
#include "ordcfa/quadrature.hpp"

namespace ordcfa {

/// Latent variable values, one entry per factor.
using LatentState = Eigen::VectorXd;

/// Complete integer-coded responses, codes 1..K_j. Missing rows are removed
/// at ingestion (see io.hpp), so every stored row is complete.
struct ResponseMatrix {
  Eigen::MatrixXi y;

  int rows() const noexcept { return static_cast<int>(y.rows()); }
  int cols() const noexcept { return static_cast<int>(y.cols()); }
  /// u_ijk: 1 when respondent i chose category k (1-based) on item j.
  int indicator(int i, int j, int k) const { return y(i, j) == k ? 1 : 0; }
};

/// Validates shape and code ranges against the spec; throws SpecError.
ResponseMatrix make_responses(Eigen::MatrixXi y, const ModelSpec& spec);

/// Unique response rows with their multiplicities, in first-seen order.
struct PatternTable {
  Eigen::MatrixXi patterns;
  Eigen::VectorXd counts;
  /// pattern index of every original row
  std::vector<int> row_pattern;
};

PatternTable collapse_patterns(const ResponseMatrix& data);

double normal_pdf(double x);
double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate for large x.
double normal_sf(double x);
/// Throws DomainError outside (0, 1).
double normal_quantile(double p);
/// Phi(b) - Phi(a) for a <= b, computed in whichever tail keeps precision.
double normal_interval(double a, double b);

/// Probabilities below this floor are clamped before taking logs.
constexpr double kProbabilityFloor = 1e-300;

/// P(Y_j = k | eta) with k in 1..K_j. Throws DomainError on non-increasing
/// thresholds or a nonpositive residual variance.
double category_prob(const ParameterSet& params, const ModelSpec& spec, int j,
                     int k, const LatentState& eta);

/// sum_j log P(Y_j = row_j | eta), with the probability floor applied.
double conditional_loglik(const ParameterSet& params, const ModelSpec& spec,
                          const Eigen::Ref<const Eigen::VectorXi>& row,
                          const LatentState& eta);
/// Gradient of conditional_loglik with respect to eta.
Eigen::VectorXd conditional_loglik_gradient(
    const ParameterSet& params, const ModelSpec& spec,
    const Eigen::Ref<const Eigen::VectorXi>& row, const LatentState& eta);
Eigen::MatrixXd conditional_loglik_hessian(
    const ParameterSet& params, const ModelSpec& spec,
    const Eigen::Ref<const Eigen::VectorXi>& row, const LatentState& eta);

/// conditional_loglik + log N(eta; kappa, Phi) without the
/// -(m/2) log(2 pi) constant. Throws DomainError for singular Phi.
double posterior_logdensity(const ParameterSet& params, const ModelSpec& spec,
                            const Eigen::Ref<const Eigen::VectorXi>& row,
                            const LatentState& eta);
Eigen::VectorXd posterior_gradient(const ParameterSet& params,
                                   const ModelSpec& spec,
                                   const Eigen::Ref<const Eigen::VectorXi>& row,
                                   const LatentState& eta);
Eigen::MatrixXd posterior_hessian(const ParameterSet& params,
                                  const ModelSpec& spec,
                                  const Eigen::Ref<const Eigen::VectorXi>& row,
                                  const LatentState& eta);

/// Marginal likelihood over a tensor-product grid of standard normal nodes
/// mapped through the Cholesky factor of Phi, eta = kappa + C z. Rescaling or
/// shifting the latent variables maps the nodes onto each other, so the
/// value is invariant under those transforms.
class MarginalLikelihood {
 public:
  MarginalLikelihood(ModelSpec spec, const ResponseMatrix& data,
                     QuadratureGrid grid);

  double value(const ParameterSet& params) const;
  /// Fills `gradient` with d loglik / d parameter for every address in
  /// parameter_addresses(spec) order (fixed entries included).
  double value_and_gradient(const ParameterSet& params,
                            Eigen::VectorXd& gradient) const;
  /// Log marginal likelihood of every original data row.
  Eigen::VectorXd row_values(const ParameterSet& params) const;

  const ModelSpec& spec() const noexcept { return spec_; }
  const QuadratureGrid& grid() const noexcept { return grid_; }
  const PatternTable& patterns() const noexcept { return patterns_; }
  int respondents() const noexcept { return respondents_; }

 private:
  double evaluate(const ParameterSet& params, Eigen::VectorXd* gradient,
                  Eigen::VectorXd* pattern_values) const;

  ModelSpec spec_;
  QuadratureGrid grid_;
  PatternTable patterns_;
  int respondents_ = 0;
};

double marginal_loglik(const ParameterSet& params, const ModelSpec& spec,
                       const ResponseMatrix& data, const QuadratureGrid& grid);

/// Addresses not in params.fixed, in canonical order.
std::vector<ParamAddress> free_addresses(const ParameterSet& params,
                                         const ModelSpec& spec);

/// Analytic gradient of marginal_loglik restricted to free_addresses.
Eigen::VectorXd loglik_gradient(const ParameterSet& params,
                                const ModelSpec& spec,
                                const ResponseMatrix& data,
                                const QuadratureGrid& grid);

/// Central-difference gradient over free_addresses with step h. Covariance
/// entries are perturbed symmetrically.
Eigen::VectorXd loglik_gradient_numeric(const ParameterSet& params,
                                        const ModelSpec& spec,
                                        const ResponseMatrix& data,
                                        const QuadratureGrid& grid,
                                        double h = 1e-5);

}  // namespace ordcfa
