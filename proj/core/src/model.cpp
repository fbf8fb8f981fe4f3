#include "ordcfa/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ordcfa/errors.hpp"

namespace ordcfa {

int ModelSpec::max_categories(int q) const {
  int k = 0;
  for (int j : members_.at(q)) k = std::max(k, items_[j].categories);
  return k;
}

int ModelSpec::max_categories() const {
  int k = 0;
  for (const auto& it : items_) k = std::max(k, it.categories);
  return k;
}

bool ModelSpec::homogeneous_categories() const {
  return std::all_of(items_.begin(), items_.end(), [&](const ItemInfo& it) {
    return it.categories == items_.front().categories;
  });
}

int ModelSpec::item_index(std::string_view name) const {
  for (int j = 0; j < item_count(); ++j)
    if (items_[j].name == name) return j;
  return -1;
}

std::string ModelSpec::fingerprint() const {
  std::ostringstream os;
  for (int q = 0; q < factor_count(); ++q) {
    os << factor_names_[q] << ':';
    for (int j : members_[q]) os << items_[j].name << '=' << items_[j].categories << ',';
    os << ';';
  }
  // FNV-1a, 64 bit
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

ModelSpec build_model_spec(std::vector<ItemInfo> items,
                           std::vector<FactorPattern> pattern) {
  if (items.empty()) throw SpecError("model has no items");
  if (pattern.empty()) throw SpecError("model has no factors");

  std::map<std::string, int> index;
  for (int j = 0; j < static_cast<int>(items.size()); ++j) {
    const auto& it = items[j];
    if (it.categories < 2)
      throw SpecError("item '" + it.name + "' needs at least 2 categories");
    if (!index.emplace(it.name, j).second)
      throw SpecError("duplicate item name '" + it.name + "'");
  }

  ModelSpec spec;
  spec.items_ = std::move(items);
  spec.factor_of_.assign(spec.items_.size(), -1);
  for (int q = 0; q < static_cast<int>(pattern.size()); ++q) {
    auto& f = pattern[q];
    if (f.items.empty())
      throw SpecError("factor '" + f.name + "' has no items");
    std::vector<int> members;
    for (const auto& name : f.items) {
      auto found = index.find(name);
      if (found == index.end())
        throw SpecError("factor '" + f.name + "' names unknown item '" + name +
                        "'");
      int j = found->second;
      if (spec.factor_of_[j] != -1)
        throw SpecError("item '" + name +
                        "' loads on more than one factor; the loading "
                        "pattern must be clustered");
      spec.factor_of_[j] = q;
      members.push_back(j);
    }
    std::sort(members.begin(), members.end());
    spec.factor_names_.push_back(f.name);
    spec.members_.push_back(std::move(members));
  }
  for (int j = 0; j < spec.item_count(); ++j)
    if (spec.factor_of_[j] == -1)
      throw SpecError("item '" + spec.items_[j].name +
                      "' is not assigned to any factor");
  return spec;
}

ModelSpec single_factor_spec(int p, int categories) {
  return clustered_spec({p}, categories);
}

ModelSpec clustered_spec(const std::vector<int>& factor_sizes,
                         int categories) {
  std::vector<ItemInfo> items;
  std::vector<FactorPattern> pattern;
  int next = 1;
  for (std::size_t q = 0; q < factor_sizes.size(); ++q) {
    FactorPattern f{"f" + std::to_string(q + 1), {}};
    for (int i = 0; i < factor_sizes[q]; ++i, ++next) {
      std::string name = "x" + std::to_string(next);
      items.push_back({name, categories});
      f.items.push_back(name);
    }
    pattern.push_back(std::move(f));
  }
  return build_model_spec(std::move(items), std::move(pattern));
}

std::string to_string(const ParamAddress& a) {
  std::ostringstream os;
  switch (a.kind) {
    case ParamKind::Intercept: os << "nu[" << a.row << "]"; break;
    case ParamKind::Loading: os << "lambda[" << a.row << "," << a.col << "]"; break;
    case ParamKind::Threshold: os << "tau[" << a.row << "," << a.col << "]"; break;
    case ParamKind::ResidualVariance: os << "theta[" << a.row << "]"; break;
    case ParamKind::LatentMean: os << "kappa[" << a.row << "]"; break;
    case ParamKind::LatentCovariance: os << "phi[" << a.row << "," << a.col << "]"; break;
  }
  return os.str();
}

ParameterSet ParameterSet::defaults(const ModelSpec& spec) {
  const int p = spec.item_count();
  const int m = spec.factor_count();
  ParameterSet ps;
  ps.nu = Eigen::VectorXd::Zero(p);
  ps.lambda = Eigen::MatrixXd::Zero(p, m);
  ps.theta = Eigen::VectorXd::Ones(p);
  ps.kappa = Eigen::VectorXd::Zero(m);
  ps.phi = Eigen::MatrixXd::Identity(m, m);
  ps.thresholds.resize(p);
  for (int j = 0; j < p; ++j) {
    const int t = spec.threshold_count(j);
    ps.thresholds[j].resize(t);
    for (int k = 0; k < t; ++k) ps.thresholds[j][k] = k - 0.5 * (t - 1);
  }
  return ps;
}

double ParameterSet::get(const ParamAddress& a) const {
  switch (a.kind) {
    case ParamKind::Intercept: return nu(a.row);
    case ParamKind::Loading: return lambda(a.row, a.col);
    case ParamKind::Threshold: return thresholds.at(a.row)(a.col);
    case ParamKind::ResidualVariance: return theta(a.row);
    case ParamKind::LatentMean: return kappa(a.row);
    case ParamKind::LatentCovariance: return phi(a.row, a.col);
  }
  return 0.0;
}

void ParameterSet::set(const ParamAddress& a, double value) {
  switch (a.kind) {
    case ParamKind::Intercept: nu(a.row) = value; break;
    case ParamKind::Loading: lambda(a.row, a.col) = value; break;
    case ParamKind::Threshold: thresholds.at(a.row)(a.col) = value; break;
    case ParamKind::ResidualVariance: theta(a.row) = value; break;
    case ParamKind::LatentMean: kappa(a.row) = value; break;
    case ParamKind::LatentCovariance:
      phi(a.row, a.col) = value;
      phi(a.col, a.row) = value;
      break;
  }
}

std::vector<ParamAddress> parameter_addresses(const ModelSpec& spec) {
  const int p = spec.item_count();
  const int m = spec.factor_count();
  std::vector<ParamAddress> out;
  for (int j = 0; j < p; ++j) out.push_back(addr::intercept(j));
  for (int j = 0; j < p; ++j) out.push_back(addr::loading(j, spec.factor_of(j)));
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < spec.threshold_count(j); ++k)
      out.push_back(addr::threshold(j, k));
  for (int j = 0; j < p; ++j) out.push_back(addr::residual(j));
  for (int q = 0; q < m; ++q) out.push_back(addr::mean(q));
  for (int q = 0; q < m; ++q)
    for (int r = 0; r <= q; ++r) out.push_back(addr::covariance(q, r));
  return out;
}

int total_parameter_count(const ModelSpec& spec) {
  return static_cast<int>(parameter_addresses(spec).size());
}

void validate_parameters(const ParameterSet& ps, const ModelSpec& spec) {
  const int p = spec.item_count();
  const int m = spec.factor_count();
  if (ps.nu.size() != p || ps.theta.size() != p || ps.lambda.rows() != p ||
      ps.lambda.cols() != m || ps.kappa.size() != m || ps.phi.rows() != m ||
      ps.phi.cols() != m || static_cast<int>(ps.thresholds.size()) != p)
    throw DomainError("parameter shapes do not match the model spec");
  for (int j = 0; j < p; ++j) {
    const auto& t = ps.thresholds[j];
    if (t.size() != spec.threshold_count(j))
      throw DomainError("item " + spec.item(j).name + " has " +
                        std::to_string(t.size()) + " thresholds, expected " +
                        std::to_string(spec.threshold_count(j)));
    for (int k = 0; k < t.size(); ++k) {
      if (!std::isfinite(t(k)))
        throw DomainError("non-finite threshold for item " + spec.item(j).name);
      if (k > 0 && !(t(k) > t(k - 1)))
        throw DomainError("thresholds of item " + spec.item(j).name +
                          " are not strictly increasing");
    }
    if (!(ps.theta(j) > 0.0))
      throw DomainError("residual variance of item " + spec.item(j).name +
                        " is not positive");
    for (int q = 0; q < m; ++q)
      if (q != spec.factor_of(j) && ps.lambda(j, q) != 0.0)
        throw DomainError("nonzero off-pattern loading for item " +
                          spec.item(j).name);
  }
  if (!ps.phi.isApprox(ps.phi.transpose(), 1e-12))
    throw DomainError("latent covariance matrix is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(ps.phi);
  if (llt.info() != Eigen::Success)
    throw DomainError("latent covariance matrix is not positive definite");
}

double max_abs_difference(const ParameterSet& a, const ParameterSet& b,
                          const ModelSpec& spec) {
  double d = 0.0;
  for (const auto& ad : parameter_addresses(spec))
    d = std::max(d, std::abs(a.get(ad) - b.get(ad)));
  return d;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::Traditional: return "traditional";
    case Regime::UnitVariance: return "unit-variance";
    case Regime::ReferenceIndicator: return "reference-indicator";
    case Regime::Delta: return "delta";
    case Regime::Integer: return "integer";
    case Regime::SumscoreRasch: return "sumscore-rasch";
    case Regime::GeometricMean: return "geometric-mean";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  for (Regime r : {Regime::Traditional, Regime::UnitVariance,
                   Regime::ReferenceIndicator, Regime::Delta, Regime::Integer,
                   Regime::SumscoreRasch, Regime::GeometricMean})
    if (to_string(r) == name) return r;
  throw SpecError("unknown constraint regime '" + std::string(name) + "'");
}

const std::vector<Regime>& minimal_regimes() {
  static const std::vector<Regime> regimes{
      Regime::Traditional, Regime::UnitVariance, Regime::ReferenceIndicator,
      Regime::Delta, Regime::Integer};
  return regimes;
}

ThresholdAnchors mixed_category_thresholds(int categories, int max_categories) {
  if (categories < 2 || categories > max_categories)
    throw DomainError("mixed_category_thresholds needs 2 <= K_j <= K_max (got K_j=" +
                      std::to_string(categories) + ", K_max=" +
                      std::to_string(max_categories) + ")");
  const double kj = categories;
  const double kmax = max_categories;
  ThresholdAnchors a;
  a.low = 0.5 + kmax / kj;
  a.high = 0.5 + kmax * (kj - 1.0) / kj;
  a.fix_intercept = categories == 2;
  return a;
}

namespace {

void add_common_location(ConstraintSet& cs, const ModelSpec& spec) {
  // nu = 0, Theta = I, kappa = 0
  for (int j = 0; j < spec.item_count(); ++j) {
    cs.fixes.push_back({addr::intercept(j), 0.0});
    cs.fixes.push_back({addr::residual(j), 1.0});
  }
  for (int q = 0; q < spec.factor_count(); ++q)
    cs.fixes.push_back({addr::mean(q), 0.0});
}

void add_integer_core(ConstraintSet& cs, const ModelSpec& spec,
                      const ConstraintOptions& opt, bool mean_loadings) {
  for (int q = 0; q < spec.factor_count(); ++q) {
    const auto& members = spec.items_of(q);
    const double nq = static_cast<double>(members.size());
    LinearConstraint nu_sum;
    LinearConstraint lam_mean;
    for (int j : members) {
      nu_sum.addresses.push_back(addr::intercept(j));
      nu_sum.weights.push_back(1.0);
      lam_mean.addresses.push_back(addr::loading(j, q));
      lam_mean.weights.push_back(1.0 / nq);
    }
    nu_sum.target = 0.0;
    lam_mean.target = 1.0;
    cs.sums.push_back(std::move(nu_sum));
    if (mean_loadings)
      cs.sums.push_back(std::move(lam_mean));
    else
      cs.nonlinear.push_back({NonlinearKind::LoadingProduct, q, 1.0});

    const int kmax = spec.max_categories(q);
    for (int j : members) {
      const int kj = spec.categories(j);
      auto anchors = mixed_category_thresholds(kj, kmax);
      if (anchors.fix_intercept) {
        if (!opt.binary_rule)
          throw SpecError(
              "integer constraints: item '" + spec.item(j).name +
              "' is binary; enable the binary rule (see "
              "mixed_category_thresholds) to fix its single threshold and "
              "intercept");
        cs.fixes.push_back({addr::threshold(j, 0), anchors.low});
        cs.fixes.push_back({addr::intercept(j), 0.0});
      } else {
        cs.fixes.push_back({addr::threshold(j, 0), anchors.low});
        cs.fixes.push_back({addr::threshold(j, kj - 2), anchors.high});
      }
    }
  }
}

void check_conflicts(const ConstraintSet& cs) {
  std::map<ParamAddress, double> seen;
  for (const auto& f : cs.fixes) {
    auto [it, inserted] = seen.emplace(f.address, f.value);
    if (!inserted && it->second != f.value)
      throw SpecError("conflicting fixed values for " + to_string(f.address));
  }
}

}  // namespace

ConstraintSet make_constraints(const ModelSpec& spec, Regime regime,
                               const ConstraintOptions& opt) {
  const int p = spec.item_count();
  const int m = spec.factor_count();
  ConstraintSet cs;
  cs.regime = regime;

  switch (regime) {
    case Regime::Traditional:
    case Regime::UnitVariance:
      add_common_location(cs, spec);
      for (int q = 0; q < m; ++q) cs.fixes.push_back({addr::covariance(q, q), 1.0});
      break;

    case Regime::ReferenceIndicator:
      add_common_location(cs, spec);
      for (int q = 0; q < m; ++q)
        cs.fixes.push_back({addr::loading(spec.items_of(q).front(), q), 1.0});
      break;

    case Regime::Delta:
      for (int j = 0; j < p; ++j) cs.fixes.push_back({addr::intercept(j), 0.0});
      for (int q = 0; q < m; ++q) {
        cs.fixes.push_back({addr::mean(q), 0.0});
        cs.fixes.push_back({addr::covariance(q, q), 1.0});
      }
      for (int j = 0; j < p; ++j)
        cs.nonlinear.push_back({NonlinearKind::TotalResponseVariance, j, 1.0});
      cs.warnings.push_back(
          "delta parameterization: residual variances are determined by the "
          "nonlinear total-variance constraint");
      break;

    case Regime::Integer:
      add_integer_core(cs, spec, opt, true);
      break;

    case Regime::GeometricMean:
      if (!opt.allow_experimental)
        throw SpecError(
            "the geometric-mean regime is experimental; enable it explicitly");
      add_integer_core(cs, spec, opt, false);
      cs.warnings.push_back(
          "geometric-mean loading constraint: loadings are identified only up "
          "to sign (an even number of negative loadings also has geometric "
          "mean 1)");
      break;

    case Regime::SumscoreRasch: {
      for (int q = 0; q < m; ++q) {
        const int k = spec.categories(spec.items_of(q).front());
        for (int j : spec.items_of(q))
          if (spec.categories(j) != k)
            throw SpecError("sumscore-rasch constraints need equal category "
                            "counts within factor '" + spec.factor_name(q) + "'");
      }
      for (int j = 0; j < p; ++j) {
        cs.fixes.push_back({addr::loading(j, spec.factor_of(j)), 1.0});
        cs.fixes.push_back({addr::intercept(j), 0.0});
        cs.fixes.push_back({addr::residual(j), 1.0});
        for (int k = 0; k < spec.threshold_count(j); ++k)
          cs.fixes.push_back({addr::threshold(j, k), 1.5 + k});
      }
      if (!opt.sumscore_free_latent) {
        for (int q = 0; q < m; ++q) {
          const int k = spec.categories(spec.items_of(q).front());
          cs.fixes.push_back({addr::mean(q), 0.5 * (k + 1)});
          const double var =
              opt.sumscore_variance.value_or(static_cast<double>(spec.factor_size(q)));
          cs.fixes.push_back({addr::covariance(q, q), var});
          for (int r = 0; r < q; ++r)
            cs.fixes.push_back({addr::covariance(q, r), 0.0});
        }
      }
      break;
    }
  }
  check_conflicts(cs);
  return cs;
}

Eigen::VectorXd constraint_residuals(const ConstraintSet& cs,
                                     const ParameterSet& ps,
                                     const ModelSpec& spec) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(cs.count()));
  Eigen::Index i = 0;
  for (const auto& f : cs.fixes) r(i++) = ps.get(f.address) - f.value;
  for (const auto& s : cs.sums) {
    double v = -s.target;
    for (std::size_t k = 0; k < s.addresses.size(); ++k)
      v += s.weights[k] * ps.get(s.addresses[k]);
    r(i++) = v;
  }
  for (const auto& c : cs.nonlinear) {
    if (c.kind == NonlinearKind::TotalResponseVariance) {
      const int j = c.index;
      const int q = spec.factor_of(j);
      const double l = ps.lambda(j, q);
      r(i++) = l * l * ps.phi(q, q) + ps.theta(j) - c.target;
    } else {
      double prod = 1.0;
      for (int j : spec.items_of(c.index)) prod *= ps.lambda(j, c.index);
      r(i++) = prod - c.target;
    }
  }
  return r;
}

double max_constraint_violation(const ConstraintSet& cs,
                                const ParameterSet& ps,
                                const ModelSpec& spec) {
  if (cs.count() == 0) return 0.0;
  return constraint_residuals(cs, ps, spec).cwiseAbs().maxCoeff();
}

void apply_fixes(ParameterSet& ps, const ConstraintSet& cs) {
  ps.fixed.clear();
  for (const auto& f : cs.fixes) {
    ps.set(f.address, f.value);
    ps.fixed.insert(f.address);
  }
}

TransformSet TransformSet::identity(const ModelSpec& spec) {
  const int p = spec.item_count();
  const int m = spec.factor_count();
  return {Eigen::VectorXd::Ones(m), Eigen::VectorXd::Ones(p),
          Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(p)};
}

void TransformSet::validate(const ModelSpec& spec) const {
  if (D.size() != spec.factor_count() || beta.size() != spec.factor_count() ||
      Delta.size() != spec.item_count() || gamma.size() != spec.item_count())
    throw DomainError("transform dimensions do not match the model spec");
  for (Eigen::Index i = 0; i < D.size(); ++i)
    if (!(D(i) > 0.0) || !std::isfinite(D(i)))
      throw DomainError("transform D must have a positive diagonal");
  for (Eigen::Index i = 0; i < Delta.size(); ++i)
    if (!(Delta(i) > 0.0) || !std::isfinite(Delta(i)))
      throw DomainError("transform Delta must have a positive diagonal");
  if (!beta.allFinite() || !gamma.allFinite())
    throw DomainError("transform beta/gamma must be finite");
}

}  // namespace ordcfa
