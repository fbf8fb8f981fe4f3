#pragma once

#include <Eigen/Dense>

#include <vector>

#include "ordcfa/model.hpp"

namespace ordcfa {

/// Unconstrained coordinates u for the parameters that satisfy a constraint
/// set. Intercepts, loadings, residual variances, latent means and
/// covariances form an affine block x = x0 + N u_lin (N an orthonormal basis
/// of the null space of the linear constraints). Thresholds use ordered
/// segment coordinates around the fixed ones: log-increments on free runs,
/// softmax logits for gaps between two fixed thresholds. A free latent
/// covariance uses log-Cholesky coordinates and one with fixed variances uses
/// normalized-row correlation coordinates, so the positive definite boundary
/// lies at infinity; other covariance constraints stay in the affine block.
/// Under the delta constraint the residual variances are derived from the
/// loadings; under the geometric-mean constraint the last loading of each
/// factor is.
class Reparameterization {
 public:
  Reparameterization(ModelSpec spec, ConstraintSet constraints);

  int dimension() const noexcept { return dim_; }
  const ModelSpec& spec() const noexcept { return spec_; }
  const ConstraintSet& constraints() const noexcept { return cs_; }

  /// Parameters for coordinates u, with fixes written exactly and the fixed
  /// mask set. The result may be infeasible; check feasible().
  ParameterSet to_params(const Eigen::VectorXd& u) const;

  /// Coordinates of a constraint-satisfying parameter set. Linear-block
  /// entries off the constraint set are projected orthogonally.
  Eigen::VectorXd from_params(const ParameterSet& params) const;

  /// Finite values, strictly increasing thresholds, positive residual
  /// variances, positive definite latent covariance.
  bool feasible(const ParameterSet& params) const;

  /// Gradient in u from a gradient over parameter_addresses(spec), evaluated
  /// at params = to_params(u).
  Eigen::VectorXd pull_back(const ParameterSet& params,
                            const Eigen::VectorXd& full_gradient) const;

 private:
  struct Segment {
    enum Kind { Free, Leading, Between, Trailing } kind;
    int first = 0;  // first threshold index covered
    int last = 0;   // last threshold index covered (inclusive)
    int anchor_lo = -1;
    int anchor_hi = -1;
    int offset = 0;  // position in u
  };
  struct ItemThresholds {
    std::vector<Segment> segments;
    std::vector<int> fixed_index;
    std::vector<double> fixed_value;
  };

  ModelSpec spec_;
  ConstraintSet cs_;
  std::vector<ParamAddress> all_;
  std::vector<int> tau_start_;
  std::vector<ParamAddress> lin_;   // affine block addresses
  std::vector<int> lin_canon_;      // their canonical indices
  Eigen::VectorXd x0_;
  Eigen::MatrixXd N_;
  std::vector<ItemThresholds> items_;
  enum class CovarianceMode { Affine, Cholesky, Correlation };
  CovarianceMode cov_mode_ = CovarianceMode::Affine;
  Eigen::VectorXd cov_scale_;  // fixed standard deviations (Correlation)
  int cov_offset_ = 0;
  bool derived_theta_ = false;
  Eigen::VectorXd theta_target_;
  std::vector<int> derived_loading_;  // item index per factor, or empty
  Eigen::VectorXd product_target_;
  int lin_dim_ = 0;
  int dim_ = 0;
};

}  // namespace ordcfa
