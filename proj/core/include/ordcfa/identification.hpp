#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ordcfa/model.hpp"

namespace ordcfa {

enum class IdentificationVerdict { Identifying, NotIdentifying, Inconclusive };

std::string to_string(IdentificationVerdict v);

struct IdentificationOptions {
  std::uint64_t seed = 20240611;
  /// Random transform starts used to look for a second solution.
  int starts = 24;
  /// Constraint residual below which a transform counts as a solution.
  double tolerance = 1e-9;
  /// Transforms farther than this (max-norm in packed coordinates) from
  /// the identity count as distinct.
  double distinct = 1e-4;
};

struct IdentificationReport {
  IdentificationVerdict verdict = IdentificationVerdict::Inconclusive;
  std::size_t constraint_count = 0;
  /// 2(p + m), the count for a minimal set.
  std::size_t minimal_count = 0;
  bool count_matches = false;
  int jacobian_rank = 0;
  int transform_dimension = 0;
  int starts_tried = 0;
  int starts_converged = 0;
  /// A non-identity transform keeping the constraints satisfied.
  std::optional<TransformSet> witness;
  std::string detail;
};

/// Draws a random parameter set satisfying the constraints and searches for
/// a non-identity (D, Delta, beta, gamma) that keeps them satisfied: a rank
/// check of the constraint Jacobian at the identity, a null-direction
/// search when it is deficient, and multistart Levenberg-Marquardt solves
/// otherwise. Failure to find any solution is reported as inconclusive.
IdentificationReport verify_identification(const ModelSpec& spec,
                                           const ConstraintSet& constraints,
                                           const IdentificationOptions& options = {});

/// Random traditionally identified parameters: positive loadings, spread
/// thresholds, a random latent correlation matrix.
ParameterSet random_traditional_parameters(const ModelSpec& spec,
                                           std::uint64_t seed);

}  // namespace ordcfa
