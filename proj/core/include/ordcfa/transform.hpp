#pragma once

#include <Eigen/Dense>

#include <optional>

#include "ordcfa/likelihood.hpp"
#include "ordcfa/model.hpp"

namespace ordcfa {

/// Maps a parameter set to an equivalent one:
///   T' = gamma 1' + Delta^-1 T        Lambda' = Delta^-1 Lambda D
///   nu' = Delta^-1 (nu + Lambda beta) + gamma
///   Theta' = Delta^-1 Theta Delta^-1
///   kappa' = D^-1 (kappa - beta)      Phi' = D^-1 Phi D^-1
/// The fixed mask is carried over unchanged. Throws DomainError for a
/// nonpositive diagonal.
ParameterSet apply_transform(const ParameterSet& params, const TransformSet& t,
                             const ModelSpec& spec);

/// The single transform equal to applying `first` and then `second`.
TransformSet compose(const TransformSet& first, const TransformSet& second);
TransformSet invert(const TransformSet& t);
double max_abs_difference(const TransformSet& a, const TransformSet& b);

struct TransformResult {
  ParameterSet params;
  TransformSet transform;
  /// Max violation of the target constraints after the transform.
  double residual = 0.0;
};

/// Closed-form conversion of traditionally identified parameters to the
/// integer scale. Items with K_j >= 3 use the outer thresholds (generalized
/// to the mixed-category anchors when K_j differs within a factor); binary
/// items need options.binary_rule and are solved numerically. Throws
/// DomainError when the input does not satisfy the traditional constraints
/// or no positive scaling exists.
TransformResult trad_to_integer(const ParameterSet& params,
                                const ModelSpec& spec,
                                const ConstraintOptions& options = {});

/// Delta = Theta^(1/2), D = diag(Phi)^(1/2), beta = kappa,
/// gamma = -Theta^(-1/2) (nu + Lambda kappa).
TransformResult to_traditional(const ParameterSet& params,
                               const ModelSpec& spec);

/// Converts traditionally identified parameters to the target constraints:
/// closed form for every built-in regime, numerical solve otherwise. The
/// output carries the target's fixed mask. Throws DomainError when no valid
/// transform reaches the target within 1e-8.
TransformResult from_traditional(const ParameterSet& params,
                                 const ModelSpec& spec,
                                 const ConstraintSet& target);

/// to_traditional followed by from_traditional, with the composed transform.
TransformResult convert(const ParameterSet& params, const ModelSpec& spec,
                        const ConstraintSet& target);

/// Packs a transform as (log D, log Delta, beta, gamma).
Eigen::VectorXd pack_transform(const TransformSet& t);
TransformSet unpack_transform(const Eigen::VectorXd& x, const ModelSpec& spec);

struct TransformSolve {
  TransformSet transform;
  double residual = 0.0;
  bool converged = false;
};

/// Levenberg-Marquardt search for a transform taking `params` onto the
/// constraint set, started from `guess`.
TransformSolve solve_transform(const ParameterSet& params,
                               const ModelSpec& spec,
                               const ConstraintSet& target,
                               const TransformSet& guess,
                               double tolerance = 1e-11);

struct RoundtripReport {
  double max_deviation = 0.0;
  /// |loglik(original) - loglik(converted)|; present when data was given.
  std::optional<double> loglik_difference;
};

/// Converts params (satisfying `a`) to `b` and back; reports the largest
/// parameter deviation and, with data, the likelihood change of the
/// intermediate parameter set.
RoundtripReport roundtrip_check(const ParameterSet& params,
                                const ModelSpec& spec, const ConstraintSet& a,
                                const ConstraintSet& b,
                                const ResponseMatrix* data = nullptr,
                                const QuadratureGrid* grid = nullptr);

}  // namespace ordcfa
