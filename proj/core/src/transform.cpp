#include "ordcfa/transform.hpp"

#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ordcfa/errors.hpp"

namespace ordcfa {

ParameterSet apply_transform(const ParameterSet& ps, const TransformSet& t,
                             const ModelSpec& spec) {
  t.validate(spec);
  const int p = spec.item_count();
  const int m = spec.factor_count();
  ParameterSet out = ps;
  for (int j = 0; j < p; ++j) {
    const int q = spec.factor_of(j);
    const double lam = ps.lambda(j, q);
    out.thresholds[j] = (ps.thresholds[j].array() / t.Delta(j) + t.gamma(j)).matrix();
    out.lambda(j, q) = lam * t.D(q) / t.Delta(j);
    out.nu(j) = (ps.nu(j) + lam * t.beta(q)) / t.Delta(j) + t.gamma(j);
    out.theta(j) = ps.theta(j) / (t.Delta(j) * t.Delta(j));
  }
  for (int q = 0; q < m; ++q) {
    out.kappa(q) = (ps.kappa(q) - t.beta(q)) / t.D(q);
    for (int r = 0; r < m; ++r) out.phi(q, r) = ps.phi(q, r) / (t.D(q) * t.D(r));
  }
  return out;
}

TransformSet compose(const TransformSet& a, const TransformSet& b) {
  TransformSet c;
  c.Delta = a.Delta.cwiseProduct(b.Delta);
  c.D = a.D.cwiseProduct(b.D);
  c.beta = a.beta + a.D.cwiseProduct(b.beta);
  c.gamma = b.gamma + a.gamma.cwiseQuotient(b.Delta);
  return c;
}

TransformSet invert(const TransformSet& t) {
  TransformSet i;
  i.Delta = t.Delta.cwiseInverse();
  i.D = t.D.cwiseInverse();
  i.beta = -t.beta.cwiseQuotient(t.D);
  i.gamma = -t.gamma.cwiseProduct(t.Delta);
  return i;
}

double max_abs_difference(const TransformSet& a, const TransformSet& b) {
  return std::max({(a.D - b.D).cwiseAbs().maxCoeff(),
                   (a.Delta - b.Delta).cwiseAbs().maxCoeff(),
                   (a.beta - b.beta).cwiseAbs().maxCoeff(),
                   (a.gamma - b.gamma).cwiseAbs().maxCoeff()});
}

Eigen::VectorXd pack_transform(const TransformSet& t) {
  const Eigen::Index m = t.D.size();
  const Eigen::Index p = t.Delta.size();
  Eigen::VectorXd x(2 * (m + p));
  x << t.D.array().log().matrix(), t.Delta.array().log().matrix(), t.beta, t.gamma;
  return x;
}

TransformSet unpack_transform(const Eigen::VectorXd& x, const ModelSpec& spec) {
  const int m = spec.factor_count();
  const int p = spec.item_count();
  TransformSet t;
  t.D = x.segment(0, m).array().exp().matrix();
  t.Delta = x.segment(m, p).array().exp().matrix();
  t.beta = x.segment(m + p, m);
  t.gamma = x.segment(2 * m + p, p);
  return t;
}

namespace {

struct TransformFunctor {
  using Scalar = double;
  const ParameterSet& params;
  const ModelSpec& spec;
  const ConstraintSet& target;
  int n_inputs;
  int n_values;

  int inputs() const { return n_inputs; }
  int values() const { return n_values; }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    fvec.setZero(n_values);
    if (!x.allFinite() || x.head(spec.factor_count() + spec.item_count())
                                  .cwiseAbs()
                                  .maxCoeff() > 700.0) {
      fvec.setConstant(1e100);
      return 0;
    }
    auto moved = apply_transform(params, unpack_transform(x, spec), spec);
    Eigen::VectorXd r = constraint_residuals(target, moved, spec);
    fvec.head(r.size()) = r;
    return 0;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& jac) const {
    jac.resize(n_values, n_inputs);
    Eigen::VectorXd xp = x, fp(n_values), fm(n_values);
    for (int i = 0; i < n_inputs; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
      xp(i) = x(i) + h;
      (*this)(xp, fp);
      xp(i) = x(i) - h;
      (*this)(xp, fm);
      xp(i) = x(i);
      jac.col(i) = (fp - fm) / (2.0 * h);
    }
    return 0;
  }
};

TransformResult finish(const ParameterSet& source, const ModelSpec& spec,
                       const ConstraintSet& target, const TransformSet& t) {
  TransformResult res;
  res.transform = t;
  res.params = apply_transform(source, t, spec);
  res.residual = max_constraint_violation(target, res.params, spec);
  return res;
}

void require_traditional(const ParameterSet& ps, const ModelSpec& spec) {
  auto trad = make_constraints(spec, Regime::Traditional);
  const double v = max_constraint_violation(trad, ps, spec);
  if (v > 1e-8)
    throw DomainError(
        "input parameters do not satisfy the traditional constraints "
        "(max violation " + std::to_string(v) + ")");
}

// Delta and gamma placing the outer thresholds of multi-category items on
// their anchors. Binary items are left at identity.
void integer_item_scales(const ParameterSet& ps, const ModelSpec& spec,
                         TransformSet& t, bool& has_binary) {
  has_binary = false;
  for (int j = 0; j < spec.item_count(); ++j) {
    const int K = spec.categories(j);
    if (K == 2) {
      has_binary = true;
      continue;
    }
    const auto anchors =
        mixed_category_thresholds(K, spec.max_categories(spec.factor_of(j)));
    const auto& tau = ps.thresholds[j];
    const double delta = (tau(K - 2) - tau(0)) / (anchors.high - anchors.low);
    t.Delta(j) = delta;
    t.gamma(j) = anchors.low - tau(0) / delta;
  }
}

void integer_latent_location(const ParameterSet& ps, const ModelSpec& spec,
                             TransformSet& t) {
  for (int q = 0; q < spec.factor_count(); ++q) {
    double sum_ld = 0.0;
    double sum_loc = 0.0;
    for (int j : spec.items_of(q)) {
      sum_ld += ps.lambda(j, q) / t.Delta(j);
      sum_loc += ps.nu(j) / t.Delta(j) + t.gamma(j);
    }
    if (sum_ld == 0.0)
      throw DomainError("loadings of factor " + spec.factor_name(q) +
                        " sum to zero; no location shift exists");
    t.beta(q) = -sum_loc / sum_ld;
  }
}

TransformSet closed_form_from_traditional(const ParameterSet& ps,
                                          const ModelSpec& spec,
                                          const ConstraintSet& target,
                                          bool& needs_solve) {
  needs_solve = false;
  TransformSet t = TransformSet::identity(spec);
  switch (target.regime) {
    case Regime::Traditional:
    case Regime::UnitVariance:
      break;
    case Regime::ReferenceIndicator:
      for (int q = 0; q < spec.factor_count(); ++q) {
        const double l = ps.lambda(spec.items_of(q).front(), q);
        if (!(l > 0.0))
          throw DomainError("reference loading of factor " +
                            spec.factor_name(q) +
                            " is not positive; no positive rescaling sets it to 1");
        t.D(q) = 1.0 / l;
      }
      break;
    case Regime::Delta:
      for (int j = 0; j < spec.item_count(); ++j) {
        const int q = spec.factor_of(j);
        const double l = ps.lambda(j, q);
        t.Delta(j) = std::sqrt(l * l * ps.phi(q, q) + ps.theta(j));
      }
      break;
    case Regime::Integer:
    case Regime::GeometricMean: {
      bool has_binary = false;
      integer_item_scales(ps, spec, t, has_binary);
      if (has_binary) {
        needs_solve = true;
        break;
      }
      for (int q = 0; q < spec.factor_count(); ++q) {
        const auto& items = spec.items_of(q);
        if (target.regime == Regime::Integer) {
          double s = 0.0;
          for (int j : items) s += ps.lambda(j, q) / t.Delta(j);
          if (!(s > 0.0))
            throw DomainError("loadings of factor " + spec.factor_name(q) +
                              " have a nonpositive sum; the mean-loading "
                              "constraint needs a positive rescaling");
          t.D(q) = static_cast<double>(items.size()) / s;
        } else {
          double logprod = 0.0;
          int negatives = 0;
          for (int j : items) {
            const double r = ps.lambda(j, q) / t.Delta(j);
            if (r == 0.0)
              throw DomainError("zero loading: geometric mean undefined");
            if (r < 0.0) ++negatives;
            logprod += std::log(std::abs(r));
          }
          if (negatives % 2 == 1)
            throw DomainError("loadings of factor " + spec.factor_name(q) +
                              " have a negative product; the geometric-mean "
                              "constraint cannot be met");
          t.D(q) = std::exp(-logprod / static_cast<double>(items.size()));
        }
      }
      integer_latent_location(ps, spec, t);
      break;
    }
    case Regime::SumscoreRasch:
      needs_solve = true;
      break;
  }
  return t;
}

}  // namespace

TransformSolve solve_transform(const ParameterSet& params,
                               const ModelSpec& spec,
                               const ConstraintSet& target,
                               const TransformSet& guess, double tolerance) {
  const int n = 2 * (spec.item_count() + spec.factor_count());
  const int nv = std::max<int>(n, static_cast<int>(target.count()));
  TransformFunctor f{params, spec, target, n, nv};
  Eigen::LevenbergMarquardt<TransformFunctor> lm(f);
  lm.parameters.ftol = 1e-15;
  lm.parameters.xtol = 1e-15;
  lm.parameters.maxfev = 400 * (n + 1);
  Eigen::VectorXd x = pack_transform(guess);
  lm.minimize(x);
  TransformSolve out;
  out.transform = unpack_transform(x, spec);
  try {
    auto moved = apply_transform(params, out.transform, spec);
    out.residual = max_constraint_violation(target, moved, spec);
  } catch (const DomainError&) {
    out.residual = std::numeric_limits<double>::infinity();
  }
  out.converged = out.residual < tolerance;
  return out;
}

TransformResult to_traditional(const ParameterSet& ps, const ModelSpec& spec) {
  validate_parameters(ps, spec);
  const int p = spec.item_count();
  const int m = spec.factor_count();
  TransformSet t;
  t.Delta.resize(p);
  t.gamma.resize(p);
  t.D.resize(m);
  t.beta = ps.kappa;
  for (int q = 0; q < m; ++q) t.D(q) = std::sqrt(ps.phi(q, q));
  for (int j = 0; j < p; ++j) {
    const int q = spec.factor_of(j);
    t.Delta(j) = std::sqrt(ps.theta(j));
    t.gamma(j) = -(ps.nu(j) + ps.lambda(j, q) * ps.kappa(q)) / t.Delta(j);
  }
  auto target = make_constraints(spec, Regime::Traditional);
  auto res = finish(ps, spec, target, t);
  if (res.residual > 1e-10)
    throw DomainError("conversion to traditional constraints left residual " +
                      std::to_string(res.residual));
  apply_fixes(res.params, target);
  return res;
}

TransformResult from_traditional(const ParameterSet& ps, const ModelSpec& spec,
                                 const ConstraintSet& target) {
  validate_parameters(ps, spec);
  bool needs_solve = false;
  TransformSet t = closed_form_from_traditional(ps, spec, target, needs_solve);
  TransformResult res;
  if (needs_solve) {
    TransformSolve s = solve_transform(ps, spec, target, t);
    if (!s.converged) {
      // second attempt from a rough integer-style start
      TransformSet g = TransformSet::identity(spec);
      for (int j = 0; j < spec.item_count(); ++j) {
        const auto& tau = ps.thresholds[j];
        if (tau.size() >= 2)
          g.Delta(j) = (tau(tau.size() - 1) - tau(0)) / std::max(1, static_cast<int>(tau.size()) - 1);
        g.gamma(j) = 1.5 - tau(0) / g.Delta(j);
      }
      TransformSolve s2 = solve_transform(ps, spec, target, g);
      if (s2.residual < s.residual) s = s2;
    }
    res = finish(ps, spec, target, s.transform);
  } else {
    res = finish(ps, spec, target, t);
  }
  if (!(res.residual <= 1e-8))
    throw DomainError("no valid transform reaches the " +
                      to_string(target.regime) +
                      " constraints (residual " + std::to_string(res.residual) +
                      ")");
  apply_fixes(res.params, target);
  return res;
}

TransformResult convert(const ParameterSet& ps, const ModelSpec& spec,
                        const ConstraintSet& target) {
  auto a = to_traditional(ps, spec);
  auto b = from_traditional(a.params, spec, target);
  b.transform = compose(a.transform, b.transform);
  return b;
}

TransformResult trad_to_integer(const ParameterSet& ps, const ModelSpec& spec,
                                const ConstraintOptions& options) {
  validate_parameters(ps, spec);
  require_traditional(ps, spec);
  auto target = make_constraints(spec, Regime::Integer, options);
  return from_traditional(ps, spec, target);
}

RoundtripReport roundtrip_check(const ParameterSet& ps, const ModelSpec& spec,
                                const ConstraintSet& a, const ConstraintSet& b,
                                const ResponseMatrix* data,
                                const QuadratureGrid* grid) {
  const double v = max_constraint_violation(a, ps, spec);
  if (v > 1e-8)
    throw DomainError("round-trip input does not satisfy the " +
                      to_string(a.regime) + " constraints");
  auto there = convert(ps, spec, b);
  auto back = convert(there.params, spec, a);
  RoundtripReport rep;
  rep.max_deviation = max_abs_difference(ps, back.params, spec);
  if (data && grid) {
    MarginalLikelihood ml(spec, *data, *grid);
    rep.loglik_difference = std::abs(ml.value(ps) - ml.value(there.params));
  }
  return rep;
}

}  // namespace ordcfa
