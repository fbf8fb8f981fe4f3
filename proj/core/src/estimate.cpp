#include "ordcfa/estimate.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ordcfa/errors.hpp"
#include "ordcfa/reparameterization.hpp"
#include "ordcfa/transform.hpp"

namespace ordcfa {

std::string to_string(StartRegime r) {
  return r == StartRegime::Simple ? "simple" : "default";
}

StartRegime parse_start_regime(std::string_view name) {
  if (name == "simple") return StartRegime::Simple;
  if (name == "default") return StartRegime::Default;
  throw SpecError("unknown start regime '" + std::string(name) +
                  "' (expected simple or default)");
}

namespace {

void repair_thresholds(ParameterSet& ps) {
  for (auto& t : ps.thresholds) {
    bool ok = t.allFinite();
    for (Eigen::Index k = 1; ok && k < t.size(); ++k) ok = t(k) > t(k - 1);
    if (ok) continue;
    const double center = t.allFinite() && t.size() > 0 ? t.mean() : 0.0;
    for (Eigen::Index k = 0; k < t.size(); ++k)
      t(k) = center + static_cast<double>(k) - 0.5 * static_cast<double>(t.size() - 1);
  }
}

bool is_minimal_like(Regime r) {
  return r != Regime::SumscoreRasch;
}

}  // namespace

ParameterSet simple_start(const ModelSpec& spec) {
  ParameterSet ps = ParameterSet::defaults(spec);
  for (int j = 0; j < spec.item_count(); ++j) {
    ps.lambda(j, spec.factor_of(j)) = 0.7;
    ps.thresholds[j].setZero();
  }
  repair_thresholds(ps);
  return ps;
}

ParameterSet default_start(const ModelSpec& spec, const ResponseMatrix& data) {
  const int p = spec.item_count();
  const int m = spec.factor_count();
  const int n = data.rows();
  if (n < 1) throw SpecError("default starting values need at least one row");
  ParameterSet ps = ParameterSet::defaults(spec);
  const double lo = 1.0 / (2.0 * n);
  const double hi = 1.0 - lo;

  Eigen::MatrixXd codes = data.y.cast<double>();
  for (int j = 0; j < p; ++j) {
    const int K = spec.categories(j);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(K);
    for (int i = 0; i < n; ++i) count(data.y(i, j) - 1) += 1.0;
    double cum = 0.0;
    auto& tau = ps.thresholds[j];
    for (int k = 0; k < K - 1; ++k) {
      cum += count(k) / n;
      tau(k) = normal_quantile(std::clamp(cum, lo, hi));
      if (k > 0 && tau(k) <= tau(k - 1)) tau(k) = tau(k - 1) + 0.05;
    }
    const double mean = codes.col(j).mean();
    const double var = n > 1 ? (codes.col(j).array() - mean).square().sum() / (n - 1) : 0.0;
    ps.theta(j) = var > 0.0 ? 0.5 * var : 0.5;
  }
  for (int q = 0; q < m; ++q) {
    ps.phi(q, q) = 0.05;
    const auto& items = spec.items_of(q);
    const int nq = static_cast<int>(items.size());
    Eigen::MatrixXd C = Eigen::MatrixXd::Identity(nq, nq);
    for (int a = 0; a < nq; ++a)
      for (int b = 0; b < a; ++b) {
        const auto xa = codes.col(items[a]).array() - codes.col(items[a]).mean();
        const auto xb = codes.col(items[b]).array() - codes.col(items[b]).mean();
        const double den = std::sqrt(xa.square().sum() * xb.square().sum());
        const double r = den > 0.0 ? (xa * xb).sum() / den : 0.0;
        C(a, b) = C(b, a) = r;
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    Eigen::VectorXd v = es.eigenvectors().col(nq - 1);
    const double ev = std::max(es.eigenvalues()(nq - 1), 1e-8);
    if (v.sum() < 0.0) v = -v;
    for (int a = 0; a < nq; ++a) {
      double l = std::sqrt(ev) * v(a);
      if (std::abs(l) < 0.05) l = 0.05;
      ps.lambda(items[a], q) = l;
    }
  }
  return ps;
}

ParameterSet project_onto_constraints(const ParameterSet& raw,
                                      const ModelSpec& spec,
                                      const ConstraintSet& cs) {
  ParameterSet ps = raw;
  repair_thresholds(ps);
  validate_parameters(ps, spec);
  bool done = false;
  if (is_minimal_like(cs.regime)) {
    try {
      ps = convert(ps, spec, cs).params;
      done = true;
    } catch (const DomainError&) {
      done = false;
    }
  }
  if (!done) {
    if (cs.regime == Regime::SumscoreRasch) {
      for (int q = 0; q < spec.factor_count(); ++q) {
        const int K = spec.categories(spec.items_of(q).front());
        ps.kappa(q) = 0.5 * (K + 1);
        ps.phi(q, q) = spec.factor_size(q);
        for (int r = 0; r < q; ++r) ps.phi(q, r) = ps.phi(r, q) = 0.0;
      }
    }
    apply_fixes(ps, cs);
  }
  Reparameterization rep(spec, cs);
  ParameterSet realized = rep.to_params(rep.from_params(ps));
  if (!rep.feasible(realized))
    throw DomainError("starting values cannot be projected onto the " +
                      to_string(cs.regime) + " constraints");
  return realized;
}

StartValues starting_values(const ModelSpec& spec, const ResponseMatrix& data,
                            const ConstraintSet& cs, StartRegime regime) {
  StartValues sv;
  sv.regime = regime;
  sv.raw = regime == StartRegime::Simple ? simple_start(spec)
                                         : default_start(spec, data);
  sv.realized = project_onto_constraints(sv.raw, spec, cs);
  return sv;
}

int free_parameter_count(const ModelSpec& spec, const ConstraintSet& cs) {
  return total_parameter_count(spec) - static_cast<int>(cs.count());
}

FitStatistics fit_statistics(double loglik, int k, int n) {
  FitStatistics s;
  s.deviance = -2.0 * loglik;
  s.free_parameters = k;
  s.aic = s.deviance + 2.0 * k;
  s.bic = s.deviance + k * std::log(static_cast<double>(n));
  return s;
}

FitStatistics fit_statistics(const FitResult& r) {
  return fit_statistics(r.loglik, r.free_parameters, r.respondents);
}

Admissibility admissibility_check(const ParameterSet& ps) {
  Admissibility a;
  for (Eigen::Index j = 0; j < ps.theta.size(); ++j)
    if (!(ps.theta(j) >= 0.0)) {
      a.admissible = false;
      a.reasons.push_back("negative residual variance (item " +
                          std::to_string(j + 1) + ")");
    }
  for (Eigen::Index q = 0; q < ps.phi.rows(); ++q)
    if (!(ps.phi(q, q) >= 0.0)) {
      a.admissible = false;
      a.reasons.push_back("negative latent variance (factor " +
                          std::to_string(q + 1) + ")");
    }
  if (ps.phi.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ps.phi, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > -1e-10)) {
      a.admissible = false;
      a.reasons.push_back("latent covariance matrix is not positive definite");
    }
  }
  return a;
}

Admissibility admissibility_check(const FitResult& r) {
  return admissibility_check(r.params);
}

namespace {

class Objective {
 public:
  Objective(const Reparameterization& rep, const MarginalLikelihood& ml)
      : rep_(rep), ml_(ml), n_(std::max(1, ml.respondents())) {}

  // negative mean log-likelihood and its gradient; false when infeasible
  bool operator()(const Eigen::VectorXd& u, double& f, Eigen::VectorXd& g) const {
    if (!u.allFinite()) return false;
    ParameterSet ps = rep_.to_params(u);
    if (!rep_.feasible(ps)) return false;
    Eigen::VectorXd full;
    double ll;
    try {
      ll = ml_.value_and_gradient(ps, full);
    } catch (const DomainError&) {
      return false;
    }
    if (!std::isfinite(ll) || !full.allFinite()) return false;
    f = -ll / n_;
    g = -rep_.pull_back(ps, full) / n_;
    ++evaluations;
    return true;
  }

  // positive quantities that vanish on the boundary of the feasible set
  std::vector<double> margins(const Eigen::VectorXd& u) const {
    ParameterSet ps = rep_.to_params(u);
    std::vector<double> out;
    for (Eigen::Index j = 0; j < ps.theta.size(); ++j) {
      out.push_back(ps.theta(j));
      const auto& t = ps.thresholds[j];
      for (Eigen::Index k = 1; k < t.size(); ++k) out.push_back(t(k) - t(k - 1));
    }
    const Eigen::Index m = ps.phi.rows();
    if (m > 0) {
      Eigen::VectorXd s = ps.phi.diagonal().cwiseMax(0.0).cwiseSqrt();
      for (Eigen::Index q = 0; q < m; ++q) out.push_back(ps.phi(q, q));
      if (m > 1 && s.minCoeff() > 0.0) {
        Eigen::MatrixXd R = s.cwiseInverse().asDiagonal() * ps.phi * s.cwiseInverse().asDiagonal();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R, Eigen::EigenvaluesOnly);
        out.push_back(es.eigenvalues()(0));
      }
    }
    return out;
  }

  mutable long evaluations = 0;

 private:
  const Reparameterization& rep_;
  const MarginalLikelihood& ml_;
  double n_;
};

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

struct SearchState {
  Eigen::VectorXd u;
  double f = 0.0;
  Eigen::VectorXd g;
  int iterations = 0;
  bool stalled = false;
};

// a step may shrink any margin to the feasible boundary by at most this factor
constexpr double kBoundaryFraction = 0.1;

struct Trial {
  double alpha = 0.0;
  bool ok = false;
  Eigen::VectorXd u, g;
  double f = 0.0;
  double slope = 0.0;
};

// strong Wolfe line search along dir; infeasible points count as too long
bool wolfe_search(const Objective& obj, const SearchState& st,
                  const Eigen::VectorXd& dir, double slope0,
                  const FitOptions& opt, Trial& out) {
  constexpr double c1 = 1e-4;
  constexpr double c2 = 0.9;
  constexpr double alpha_max = 4.0;
  const std::vector<double> room = obj.margins(st.u);
  const double dn = inf_norm(dir);
  auto eval = [&](double alpha) {
    Trial t;
    t.alpha = alpha;
    t.u = st.u + alpha * dir;
    const std::vector<double> next = obj.margins(t.u);
    for (std::size_t i = 0; i < room.size() && i < next.size(); ++i)
      if (!(next[i] >= kBoundaryFraction * room[i])) return t;
    t.ok = obj(t.u, t.f, t.g);
    if (t.ok) t.slope = t.g.dot(dir);
    return t;
  };
  auto sufficient = [&](const Trial& t) {
    return t.ok && t.f <= st.f + c1 * t.alpha * slope0;
  };
  auto curvature = [&](const Trial& t) { return std::abs(t.slope) <= -c2 * slope0; };

  Trial best;  // best point with sufficient decrease, as a fallback
  auto remember = [&](const Trial& t) {
    if (sufficient(t) && (!best.ok || t.f < best.f)) best = t;
  };

  auto zoom = [&](Trial lo, Trial hi) {
    for (int it = 0; it < 40; ++it) {
      if (std::abs(hi.alpha - lo.alpha) * dn < opt.step_tolerance * 1e-4) break;
      double a = 0.5 * (lo.alpha + hi.alpha);
      if (hi.ok) {
        // cubic interpolation through both ends
        const double d = hi.alpha - lo.alpha;
        const double d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (lo.alpha - hi.alpha);
        const double rad = d1 * d1 - lo.slope * hi.slope;
        if (rad >= 0.0) {
          const double d2 = std::copysign(std::sqrt(rad), d);
          const double c = hi.alpha - d * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
          const double lo_b = std::min(lo.alpha, hi.alpha);
          const double hi_b = std::max(lo.alpha, hi.alpha);
          const double margin = 0.1 * (hi_b - lo_b);
          if (std::isfinite(c) && c > lo_b + margin && c < hi_b - margin) a = c;
        }
      }
      Trial t = eval(a);
      remember(t);
      if (!sufficient(t) || t.f >= lo.f) {
        hi = t;
      } else {
        if (curvature(t)) {
          out = t;
          return true;
        }
        if (t.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = t;
      }
    }
    return false;
  };

  Trial prev;
  prev.alpha = 0.0;
  prev.ok = true;
  prev.u = st.u;
  prev.f = st.f;
  prev.g = st.g;
  prev.slope = slope0;
  double alpha = 1.0;
  for (int i = 0; i < 12; ++i) {
    Trial t = eval(alpha);
    remember(t);
    if (!sufficient(t) || (i > 0 && t.f >= prev.f)) {
      if (zoom(prev, t)) return true;
      break;
    }
    if (curvature(t)) {
      out = t;
      return true;
    }
    if (t.slope >= 0.0) {
      if (zoom(t, prev)) return true;
      break;
    }
    if (alpha >= alpha_max) {
      out = t;
      return true;
    }
    prev = t;
    alpha = std::min(2.0 * alpha, alpha_max);
  }
  if (best.ok) {
    out = best;
    return true;
  }
  return false;
}

void bfgs(const Objective& obj, SearchState& st, const FitOptions& opt) {
  const Eigen::Index d = st.u.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
  bool fresh = true;
  while (st.iterations < opt.max_iterations) {
    if (inf_norm(st.g) < opt.gradient_tolerance) return;
    ++st.iterations;
    Eigen::VectorXd dir = -H * st.g;
    double slope = st.g.dot(dir);
    if (!(slope < 0.0)) {
      H.setIdentity();
      fresh = true;
      dir = -st.g;
      slope = st.g.dot(dir);
    }
    const double dn = inf_norm(dir);
    if (dn > opt.max_step) {
      dir *= opt.max_step / dn;
      slope *= opt.max_step / dn;
    }
    Trial t;
    if (!wolfe_search(obj, st, dir, slope, opt, t)) {
      if (!fresh) {
        H.setIdentity();
        fresh = true;
        continue;
      }
      st.stalled = true;
      return;
    }
    Eigen::VectorXd s = t.u - st.u;
    Eigen::VectorXd y = t.g - st.g;
    st.u = t.u;
    st.f = t.f;
    st.g = t.g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        H *= sy / y.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      Eigen::VectorXd Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) -
           rho * (Hy * s.transpose() + s * Hy.transpose());
    }
    if (inf_norm(s) < opt.step_tolerance && inf_norm(st.g) >= opt.gradient_tolerance) {
      // progress has stopped far from a stationary point
      if (!fresh) {
        H.setIdentity();
        fresh = true;
      } else {
        st.stalled = true;
        return;
      }
    }
  }
}

void newton_polish(const Objective& obj, SearchState& st, const FitOptions& opt) {
  const Eigen::Index d = st.u.size();
  for (int it = 0; it < opt.polish_iterations; ++it) {
    if (inf_norm(st.g) < opt.polish_tolerance) return;
    Eigen::MatrixXd Hm(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(st.u(i)));
      Eigen::VectorXd up = st.u, dn = st.u, gu, gd;
      double fu, fd;
      up(i) += h;
      dn(i) -= h;
      const bool okU = obj(up, fu, gu);
      const bool okD = obj(dn, fd, gd);
      if (okU && okD)
        Hm.col(i) = (gu - gd) / (2.0 * h);
      else if (okU)
        Hm.col(i) = (gu - st.g) / h;
      else if (okD)
        Hm.col(i) = (st.g - gd) / h;
      else
        return;
    }
    Hm = 0.5 * (Hm + Hm.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hm);
    Eigen::VectorXd ev = es.eigenvalues().cwiseAbs().cwiseMax(1e-8);
    Eigen::VectorXd dir =
        -es.eigenvectors() * (es.eigenvectors().transpose() * st.g).cwiseQuotient(ev);
    double alpha = 1.0;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, alpha *= 0.5) {
      Eigen::VectorXd un = st.u + alpha * dir, gn;
      double fn;
      if (!obj(un, fn, gn)) continue;
      const bool decrease = fn <= st.f + 1e-4 * alpha * st.g.dot(dir);
      const bool flat = fn <= st.f + 1e-13 * std::max(1.0, std::abs(st.f)) &&
                        inf_norm(gn) < inf_norm(st.g);
      if (decrease || flat) {
        st.u = un;
        st.f = fn;
        st.g = gn;
        accepted = true;
        break;
      }
    }
    if (!accepted) return;
  }
}

}  // namespace

FitResult fit_mml(const ModelSpec& spec, const ResponseMatrix& data,
                  const ConstraintSet& cs, const StartValues& start,
                  const QuadratureGrid& grid, const FitOptions& opt) {
  FitResult r;
  r.regime = cs.regime;
  r.warnings = cs.warnings;
  r.respondents = data.rows();
  r.free_parameters = free_parameter_count(spec, cs);

  Reparameterization rep(spec, cs);
  MarginalLikelihood ml(spec, data, grid);
  Objective obj(rep, ml);

  SearchState st;
  st.u = rep.from_params(start.realized);
  if (!obj(st.u, st.f, st.g)) {
    r.params = start.realized;
    r.loglik = -std::numeric_limits<double>::infinity();
    r.message = "starting values are infeasible";
    r.admissible = false;
    r.admissibility_reasons = {"no feasible starting point"};
    return r;
  }
  if (rep.dimension() > 0) {
    bfgs(obj, st, opt);
    if (opt.polish) newton_polish(obj, st, opt);
  }

  r.params = rep.to_params(st.u);
  r.loglik = -st.f * std::max(1, data.rows());
  r.iterations = st.iterations;
  r.gradient_norm = inf_norm(st.g);
  r.constraint_residual = max_constraint_violation(cs, r.params, spec);
  r.converged = r.gradient_norm < opt.gradient_tolerance;
  if (r.converged)
    r.message = "converged";
  else if (st.stalled)
    r.message = "line search stalled with gradient norm " + std::to_string(r.gradient_norm);
  else
    r.message = "iteration limit reached with gradient norm " + std::to_string(r.gradient_norm);
  auto adm = admissibility_check(r.params);
  r.admissible = adm.admissible;
  r.admissibility_reasons = adm.reasons;
  return r;
}

StandardizedSolution standardize(const ParameterSet& ps, const ModelSpec& spec) {
  const int p = spec.item_count();
  const int m = spec.factor_count();
  StandardizedSolution s;
  s.loadings = Eigen::MatrixXd::Zero(p, m);
  s.residual_variances.resize(p);
  s.thresholds.resize(p);
  for (int j = 0; j < p; ++j) {
    const int q = spec.factor_of(j);
    const double l = ps.lambda(j, q);
    const double total = l * l * ps.phi(q, q) + ps.theta(j);
    if (!(total > 0.0))
      throw DomainError("item " + spec.item(j).name +
                        " has zero total latent-response variance");
    const double sd = std::sqrt(total);
    s.loadings(j, q) = l * std::sqrt(ps.phi(q, q)) / sd;
    s.residual_variances(j) = ps.theta(j) / total;
    s.thresholds[j] = ((ps.thresholds[j].array() - ps.nu(j) - l * ps.kappa(q)) / sd).matrix();
  }
  s.latent_correlation.resize(m, m);
  for (int q = 0; q < m; ++q)
    for (int r = 0; r < m; ++r)
      s.latent_correlation(q, r) = ps.phi(q, r) / std::sqrt(ps.phi(q, q) * ps.phi(r, r));
  return s;
}

double chi_square_sf(double x, double df) {
  if (df <= 0) throw DomainError("chi-square reference needs df > 0");
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(
      boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

LikelihoodRatioTest sumscore_lr_test(const ModelSpec& spec,
                                     const ResponseMatrix& data,
                                     const QuadratureGrid& grid,
                                     const FitOptions& opt) {
  ConstraintOptions full_opt;
  full_opt.binary_rule = true;
  auto full_cs = make_constraints(spec, Regime::Integer, full_opt);
  ConstraintOptions rest_opt;
  rest_opt.sumscore_free_latent = true;
  auto rest_cs = make_constraints(spec, Regime::SumscoreRasch, rest_opt);

  auto best_fit = [&](const ConstraintSet& cs) {
    FitResult best;
    bool have = false;
    for (StartRegime sr : {StartRegime::Simple, StartRegime::Default}) {
      FitResult f;
      try {
        f = fit_mml(spec, data, cs, starting_values(spec, data, cs, sr), grid, opt);
      } catch (const DomainError&) {
        continue;
      }
      if (!have || (f.converged && !best.converged) ||
          (f.converged == best.converged && f.loglik > best.loglik)) {
        best = f;
        have = true;
      }
    }
    if (!have || !best.converged)
      throw ConvergenceError("sum-score test: the " + to_string(cs.regime) +
                             " fit did not converge (" +
                             (have ? best.message : std::string("no feasible start")) + ")");
    return best;
  };

  LikelihoodRatioTest t;
  t.full = best_fit(full_cs);
  t.restricted = best_fit(rest_cs);
  t.df = free_parameter_count(spec, full_cs) - free_parameter_count(spec, rest_cs);
  t.statistic = std::max(0.0, 2.0 * (t.full.loglik - t.restricted.loglik));
  t.p_value = t.df > 0 ? chi_square_sf(t.statistic, t.df) : 1.0;
  return t;
}

}  // namespace ordcfa
