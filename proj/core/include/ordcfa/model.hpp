#pragma once

// Domain types for clustered ordinal factor models: the model layout,
// parameter values, identification constraints, and the (D, Delta, beta,
// gamma) transformation between equivalent parameterizations.

#include <Eigen/Dense>

#include <compare>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ordcfa {

struct ItemInfo {
  std::string name;
  int categories = 0;

  friend bool operator==(const ItemInfo&, const ItemInfo&) = default;
};

struct FactorPattern {
  std::string name;
  std::vector<std::string> items;
};

/// Items, factors and the clustered loading pattern. Every item loads on
/// exactly one factor and every factor has at least one item.
class ModelSpec {
 public:
  ModelSpec() = default;

  int item_count() const noexcept { return static_cast<int>(items_.size()); }
  int factor_count() const noexcept {
    return static_cast<int>(members_.size());
  }

  const ItemInfo& item(int j) const { return items_.at(j); }
  const std::vector<ItemInfo>& items() const noexcept { return items_; }
  int categories(int j) const { return items_.at(j).categories; }
  int threshold_count(int j) const { return categories(j) - 1; }
  int factor_of(int j) const { return factor_of_.at(j); }
  const std::vector<int>& items_of(int q) const { return members_.at(q); }
  int factor_size(int q) const {
    return static_cast<int>(members_.at(q).size());
  }
  const std::string& factor_name(int q) const { return factor_names_.at(q); }

  /// Largest category count among the items of factor q.
  int max_categories(int q) const;
  int max_categories() const;
  bool homogeneous_categories() const;

  /// Index of the named item, or -1.
  int item_index(std::string_view name) const;

  /// Stable text digest of names, category counts and pattern.
  std::string fingerprint() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

 private:
  friend ModelSpec build_model_spec(std::vector<ItemInfo>,
                                    std::vector<FactorPattern>);

  std::vector<ItemInfo> items_;
  std::vector<std::string> factor_names_;
  std::vector<std::vector<int>> members_;
  std::vector<int> factor_of_;
};

/// Validates the pattern and derives the per-factor item sets. Throws
/// SpecError on an item in two factors, an unassigned item, an unknown
/// item, an empty factor, or K_j < 2.
ModelSpec build_model_spec(std::vector<ItemInfo> items,
                           std::vector<FactorPattern> pattern);

/// p items named x1..xp with K categories, all on one factor "f1".
ModelSpec single_factor_spec(int p, int categories);

/// Factors f1..fm with the given sizes; items numbered consecutively.
ModelSpec clustered_spec(const std::vector<int>& factor_sizes, int categories);

enum class ParamKind {
  Intercept,
  Loading,
  Threshold,
  ResidualVariance,
  LatentMean,
  LatentCovariance,
};

/// Names one scalar parameter. Loading uses (item, factor); Threshold uses
/// (item, 0-based threshold index); LatentCovariance is stored with
/// row >= col.
struct ParamAddress {
  ParamKind kind = ParamKind::Intercept;
  int row = 0;
  int col = 0;

  friend auto operator<=>(const ParamAddress&, const ParamAddress&) = default;
};

namespace addr {
inline ParamAddress intercept(int j) { return {ParamKind::Intercept, j, 0}; }
inline ParamAddress loading(int j, int q) { return {ParamKind::Loading, j, q}; }
inline ParamAddress threshold(int j, int k) {
  return {ParamKind::Threshold, j, k};
}
inline ParamAddress residual(int j) {
  return {ParamKind::ResidualVariance, j, 0};
}
inline ParamAddress mean(int q) { return {ParamKind::LatentMean, q, 0}; }
inline ParamAddress covariance(int q, int r) {
  return q >= r ? ParamAddress{ParamKind::LatentCovariance, q, r}
                : ParamAddress{ParamKind::LatentCovariance, r, q};
}
}  // namespace addr

std::string to_string(const ParamAddress& a);

/// All model parameters in latent-response units. `fixed` marks entries
/// held constant during estimation; structural-zero loadings are not
/// addressable and always zero.
struct ParameterSet {
  Eigen::VectorXd nu;
  Eigen::MatrixXd lambda;
  std::vector<Eigen::VectorXd> thresholds;
  Eigen::VectorXd theta;
  Eigen::VectorXd kappa;
  Eigen::MatrixXd phi;
  std::set<ParamAddress> fixed;

  /// Correctly shaped set: zero intercepts/loadings/means, unit residual
  /// and latent variances, thresholds evenly spaced around zero.
  static ParameterSet defaults(const ModelSpec& spec);

  double get(const ParamAddress& a) const;
  void set(const ParamAddress& a, double value);
  bool is_fixed(const ParamAddress& a) const { return fixed.contains(a); }

  /// The single structural loading of item j.
  double item_loading(const ModelSpec& spec, int j) const {
    return lambda(j, spec.factor_of(j));
  }
};

/// Every addressable parameter in canonical order: intercepts, loadings,
/// thresholds (item-major), residual variances, latent means, latent
/// covariance lower triangle.
std::vector<ParamAddress> parameter_addresses(const ModelSpec& spec);
int total_parameter_count(const ModelSpec& spec);

/// Throws DomainError when shapes disagree with the spec, thresholds are not
/// strictly increasing, a residual variance is nonpositive, Phi is not
/// symmetric positive definite, or an off-pattern loading is nonzero.
void validate_parameters(const ParameterSet& params, const ModelSpec& spec);

/// Largest absolute difference over all addressable parameters.
double max_abs_difference(const ParameterSet& a, const ParameterSet& b,
                          const ModelSpec& spec);

enum class Regime {
  Traditional,
  UnitVariance,
  ReferenceIndicator,
  Delta,
  Integer,
  SumscoreRasch,
  GeometricMean,
};

std::string to_string(Regime r);
/// Throws SpecError for unknown names.
Regime parse_regime(std::string_view name);
/// The five regimes that identify the model with exactly 2(p + m)
/// constraints.
const std::vector<Regime>& minimal_regimes();

struct FixConstraint {
  ParamAddress address;
  double value = 0.0;
};

/// sum_i weights[i] * param(addresses[i]) == target
struct LinearConstraint {
  std::vector<ParamAddress> addresses;
  std::vector<double> weights;
  double target = 0.0;
};

enum class NonlinearKind {
  /// lambda_j^2 phi_qq + theta_j == target for item `index`.
  TotalResponseVariance,
  /// product of the loadings of factor `index` == target.
  LoadingProduct,
};

struct NonlinearConstraint {
  NonlinearKind kind = NonlinearKind::TotalResponseVariance;
  int index = 0;
  double target = 1.0;
};

struct ConstraintSet {
  Regime regime = Regime::Traditional;
  std::vector<FixConstraint> fixes;
  std::vector<LinearConstraint> sums;
  std::vector<NonlinearConstraint> nonlinear;
  std::vector<std::string> warnings;

  std::size_t count() const noexcept {
    return fixes.size() + sums.size() + nonlinear.size();
  }
  bool has_nonlinear() const noexcept { return !nonlinear.empty(); }
};

struct ConstraintOptions {
  /// Required to build the geometric-mean regime.
  bool allow_experimental = false;
  /// Integer regime: binary items get the single mixed-category threshold
  /// plus nu_j = 0 instead of raising an error.
  bool binary_rule = false;
  /// Sumscore-rasch latent variance; defaults to the factor's item count.
  std::optional<double> sumscore_variance;
  /// Sumscore-rasch: estimate kappa and Phi instead of fixing them.
  bool sumscore_free_latent = false;
};

ConstraintSet make_constraints(const ModelSpec& spec, Regime regime,
                               const ConstraintOptions& options = {});

struct ThresholdAnchors {
  double low = 0.0;
  double high = 0.0;
  /// Binary items: the intercept is also fixed to zero.
  bool fix_intercept = false;
};

/// Outer-threshold targets putting a K_j-category item on the K_max-point
/// integer scale. Throws DomainError unless 2 <= K_j <= K_max.
ThresholdAnchors mixed_category_thresholds(int categories, int max_categories);

/// One residual per constraint, in fixes/sums/nonlinear order.
Eigen::VectorXd constraint_residuals(const ConstraintSet& constraints,
                                     const ParameterSet& params,
                                     const ModelSpec& spec);
double max_constraint_violation(const ConstraintSet& constraints,
                                const ParameterSet& params,
                                const ModelSpec& spec);

/// Writes fixed values into `params` and replaces its fixed mask with the
/// constraint set's fixes. Linear and nonlinear constraints are untouched.
void apply_fixes(ParameterSet& params, const ConstraintSet& constraints);

/// D (m) and Delta (p) are the positive diagonals; beta (m), gamma (p).
struct TransformSet {
  Eigen::VectorXd D;
  Eigen::VectorXd Delta;
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;

  static TransformSet identity(const ModelSpec& spec);
  /// Throws DomainError on a nonpositive or non-finite diagonal entry.
  void validate(const ModelSpec& spec) const;
};

}  // namespace ordcfa
