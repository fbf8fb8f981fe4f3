#include "ordcfa/likelihood.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "ordcfa/errors.hpp"

namespace ordcfa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
const double kLogFloor = std::log(kProbabilityFloor);

struct CategoryEval {
  double logp = 0.0;
  double p = 0.0;
  double dmu = 0.0;   // d log P / d mu
  double dup = 0.0;   // d log P / d upper threshold
  double dlo = 0.0;   // d log P / d lower threshold
  double dsig = 0.0;  // d log P / d sigma
  double d2mu = 0.0;  // d^2 log P / d mu^2
};

CategoryEval eval_category(double lo, double up, double mu, double sigma,
                           bool derivs) {
  CategoryEval e;
  const double a = std::isfinite(lo) ? (lo - mu) / sigma : -kInf;
  const double b = std::isfinite(up) ? (up - mu) / sigma : kInf;
  const double p = normal_interval(a, b);
  if (!(p > kProbabilityFloor)) {
    e.p = kProbabilityFloor;
    e.logp = kLogFloor;
    return e;
  }
  e.p = p;
  e.logp = std::log(p);
  if (!derivs) return e;
  const double pa = std::isfinite(a) ? normal_pdf(a) : 0.0;
  const double pb = std::isfinite(b) ? normal_pdf(b) : 0.0;
  const double apa = std::isfinite(a) ? a * pa : 0.0;
  const double bpb = std::isfinite(b) ? b * pb : 0.0;
  const double sp = sigma * p;
  e.dup = pb / sp;
  e.dlo = -pa / sp;
  e.dmu = -(pb - pa) / sp;
  e.dsig = -(bpb - apa) / sp;
  const double d2 = -(bpb - apa) / (sigma * sigma * p);
  e.d2mu = d2 - e.dmu * e.dmu;
  return e;
}

double lower_threshold(const Eigen::VectorXd& tau, int k) {
  return k == 1 ? -kInf : tau(k - 2);
}
double upper_threshold(const Eigen::VectorXd& tau, int k) {
  return k == tau.size() + 1 ? kInf : tau(k - 1);
}

void check_item(const ParameterSet& ps, const ModelSpec& spec, int j) {
  const auto& t = ps.thresholds.at(j);
  if (t.size() != spec.threshold_count(j))
    throw DomainError("threshold count mismatch for item " + spec.item(j).name);
  for (int k = 1; k < t.size(); ++k)
    if (!(t(k) > t(k - 1)))
      throw DomainError("thresholds of item " + spec.item(j).name +
                        " are not strictly increasing");
  if (!(ps.theta(j) > 0.0))
    throw DomainError("residual variance of item " + spec.item(j).name +
                      " is not positive");
}

double item_mean(const ParameterSet& ps, const ModelSpec& spec, int j,
                 const LatentState& eta) {
  const int q = spec.factor_of(j);
  return ps.nu(j) + ps.lambda(j, q) * eta(q);
}

// Offsets into the canonical parameter vector.
struct Layout {
  int p = 0, m = 0;
  int nu = 0, lambda = 0, tau = 0, theta = 0, kappa = 0, phi = 0, total = 0;
  std::vector<int> tau_start;

  explicit Layout(const ModelSpec& spec) {
    p = spec.item_count();
    m = spec.factor_count();
    nu = 0;
    lambda = p;
    tau = 2 * p;
    int t = 0;
    for (int j = 0; j < p; ++j) {
      tau_start.push_back(tau + t);
      t += spec.threshold_count(j);
    }
    theta = tau + t;
    kappa = theta + p;
    phi = kappa + m;
    total = phi + m * (m + 1) / 2;
  }
  int cov(int q, int r) const {
    if (q < r) std::swap(q, r);
    return phi + q * (q + 1) / 2 + r;
  }
};

}  // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double normal_sf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("normal quantile needs 0 < p < 1");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double normal_interval(double a, double b) {
  if (a >= 0.0) return normal_sf(a) - normal_sf(b);
  if (b <= 0.0) return normal_cdf(b) - normal_cdf(a);
  return 1.0 - normal_sf(b) - normal_cdf(a);
}

ResponseMatrix make_responses(Eigen::MatrixXi y, const ModelSpec& spec) {
  if (y.cols() != spec.item_count())
    throw SpecError("response matrix has " + std::to_string(y.cols()) +
                    " columns, model has " +
                    std::to_string(spec.item_count()) + " items");
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (int j = 0; j < spec.item_count(); ++j)
      if (y(i, j) < 1 || y(i, j) > spec.categories(j))
        throw SpecError("row " + std::to_string(i + 1) + ", item " +
                        spec.item(j).name + ": code " +
                        std::to_string(y(i, j)) + " outside 1.." +
                        std::to_string(spec.categories(j)));
  return ResponseMatrix{std::move(y)};
}

PatternTable collapse_patterns(const ResponseMatrix& data) {
  std::map<std::vector<int>, int> index;
  std::vector<std::vector<int>> order;
  std::vector<double> counts;
  PatternTable t;
  t.row_pattern.reserve(data.rows());
  for (int i = 0; i < data.rows(); ++i) {
    std::vector<int> key(data.cols());
    for (int j = 0; j < data.cols(); ++j) key[j] = data.y(i, j);
    auto [it, inserted] = index.emplace(key, static_cast<int>(order.size()));
    if (inserted) {
      order.push_back(key);
      counts.push_back(0.0);
    }
    counts[it->second] += 1.0;
    t.row_pattern.push_back(it->second);
  }
  t.patterns.resize(static_cast<Eigen::Index>(order.size()), data.cols());
  t.counts.resize(static_cast<Eigen::Index>(order.size()));
  for (std::size_t u = 0; u < order.size(); ++u) {
    for (int j = 0; j < data.cols(); ++j) t.patterns(u, j) = order[u][j];
    t.counts(u) = counts[u];
  }
  return t;
}

double category_prob(const ParameterSet& ps, const ModelSpec& spec, int j,
                     int k, const LatentState& eta) {
  check_item(ps, spec, j);
  if (k < 1 || k > spec.categories(j))
    throw DomainError("category " + std::to_string(k) + " outside 1.." +
                      std::to_string(spec.categories(j)));
  const auto& tau = ps.thresholds[j];
  const double a = lower_threshold(tau, k);
  const double b = upper_threshold(tau, k);
  const double mu = item_mean(ps, spec, j, eta);
  const double sd = std::sqrt(ps.theta(j));
  return normal_interval(std::isfinite(a) ? (a - mu) / sd : -kInf,
                         std::isfinite(b) ? (b - mu) / sd : kInf);
}

double conditional_loglik(const ParameterSet& ps, const ModelSpec& spec,
                          const Eigen::Ref<const Eigen::VectorXi>& row,
                          const LatentState& eta) {
  double ll = 0.0;
  for (int j = 0; j < spec.item_count(); ++j) {
    check_item(ps, spec, j);
    const int k = row(j);
    const auto& tau = ps.thresholds[j];
    ll += eval_category(lower_threshold(tau, k), upper_threshold(tau, k),
                        item_mean(ps, spec, j, eta), std::sqrt(ps.theta(j)),
                        false)
              .logp;
  }
  return ll;
}

Eigen::VectorXd conditional_loglik_gradient(
    const ParameterSet& ps, const ModelSpec& spec,
    const Eigen::Ref<const Eigen::VectorXi>& row, const LatentState& eta) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(spec.factor_count());
  for (int j = 0; j < spec.item_count(); ++j) {
    check_item(ps, spec, j);
    const int q = spec.factor_of(j);
    const int k = row(j);
    const auto& tau = ps.thresholds[j];
    auto e = eval_category(lower_threshold(tau, k), upper_threshold(tau, k),
                           item_mean(ps, spec, j, eta), std::sqrt(ps.theta(j)),
                           true);
    g(q) += e.dmu * ps.lambda(j, q);
  }
  return g;
}

Eigen::MatrixXd conditional_loglik_hessian(
    const ParameterSet& ps, const ModelSpec& spec,
    const Eigen::Ref<const Eigen::VectorXi>& row, const LatentState& eta) {
  const int m = spec.factor_count();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
  for (int j = 0; j < spec.item_count(); ++j) {
    check_item(ps, spec, j);
    const int q = spec.factor_of(j);
    const int k = row(j);
    const auto& tau = ps.thresholds[j];
    auto e = eval_category(lower_threshold(tau, k), upper_threshold(tau, k),
                           item_mean(ps, spec, j, eta), std::sqrt(ps.theta(j)),
                           true);
    const double l = ps.lambda(j, q);
    h(q, q) += e.d2mu * l * l;
  }
  return h;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> phi_factor(const ParameterSet& ps) {
  Eigen::LLT<Eigen::MatrixXd> llt(ps.phi);
  if (llt.info() != Eigen::Success)
    throw DomainError("latent covariance matrix is singular or indefinite");
  return llt;
}

}  // namespace

double posterior_logdensity(const ParameterSet& ps, const ModelSpec& spec,
                            const Eigen::Ref<const Eigen::VectorXi>& row,
                            const LatentState& eta) {
  auto llt = phi_factor(ps);
  Eigen::VectorXd d = eta - ps.kappa;
  Eigen::VectorXd w = llt.matrixL().solve(d);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < ps.phi.rows(); ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return conditional_loglik(ps, spec, row, eta) - 0.5 * logdet -
         0.5 * w.squaredNorm();
}

Eigen::VectorXd posterior_gradient(const ParameterSet& ps,
                                   const ModelSpec& spec,
                                   const Eigen::Ref<const Eigen::VectorXi>& row,
                                   const LatentState& eta) {
  auto llt = phi_factor(ps);
  return conditional_loglik_gradient(ps, spec, row, eta) -
         llt.solve(Eigen::VectorXd(eta - ps.kappa));
}

Eigen::MatrixXd posterior_hessian(const ParameterSet& ps, const ModelSpec& spec,
                                  const Eigen::Ref<const Eigen::VectorXi>& row,
                                  const LatentState& eta) {
  auto llt = phi_factor(ps);
  const int m = spec.factor_count();
  return conditional_loglik_hessian(ps, spec, row, eta) -
         llt.solve(Eigen::MatrixXd::Identity(m, m));
}

MarginalLikelihood::MarginalLikelihood(ModelSpec spec,
                                       const ResponseMatrix& data,
                                       QuadratureGrid grid)
    : spec_(std::move(spec)), grid_(std::move(grid)) {
  if (grid_.dimension != spec_.factor_count())
    throw SpecError("quadrature grid has dimension " +
                    std::to_string(grid_.dimension) + " but the model has " +
                    std::to_string(spec_.factor_count()) + " factors");
  if (data.cols() != spec_.item_count())
    throw SpecError("response matrix does not match the model spec");
  patterns_ = collapse_patterns(data);
  respondents_ = data.rows();
}

double MarginalLikelihood::value(const ParameterSet& ps) const {
  return evaluate(ps, nullptr, nullptr);
}

double MarginalLikelihood::value_and_gradient(const ParameterSet& ps,
                                              Eigen::VectorXd& gradient) const {
  return evaluate(ps, &gradient, nullptr);
}

Eigen::VectorXd MarginalLikelihood::row_values(const ParameterSet& ps) const {
  Eigen::VectorXd per_pattern;
  evaluate(ps, nullptr, &per_pattern);
  Eigen::VectorXd out(respondents_);
  for (int i = 0; i < respondents_; ++i)
    out(i) = per_pattern(patterns_.row_pattern[i]);
  return out;
}

double MarginalLikelihood::evaluate(const ParameterSet& ps,
                                    Eigen::VectorXd* gradient,
                                    Eigen::VectorXd* pattern_values) const {
  const ModelSpec& spec = spec_;
  validate_parameters(ps, spec);
  const int p = spec.item_count();
  const int m = spec.factor_count();
  const int G = grid_.node_count();
  const bool want_grad = gradient != nullptr;
  const Eigen::VectorXd& z = grid_.nodes;

  Eigen::LLT<Eigen::MatrixXd> llt(ps.phi);
  if (llt.info() != Eigen::Success)
    throw DomainError("latent covariance matrix is not positive definite");
  const Eigen::MatrixXd C = llt.matrixL();

  // factor q depends on the first q+1 node coordinates; its points are those
  // prefixes, numbered lexicographically
  std::vector<int> npts(m);
  for (int q = 0; q < m; ++q) npts[q] = q == 0 ? G : npts[q - 1] * G;
  const int J = npts[m - 1];
  auto digit = [&](int pt, int q, int r) {
    int v = pt;
    for (int i = q; i > r; --i) v /= G;
    return v % G;
  };
  std::vector<Eigen::VectorXd> eta(m);
  for (int q = 0; q < m; ++q) {
    eta[q].resize(npts[q]);
    for (int pt = 0; pt < npts[q]; ++pt) {
      double e = ps.kappa(q);
      for (int r = 0; r <= q; ++r) e += C(q, r) * z(digit(pt, q, r));
      eta[q](pt) = e;
    }
  }
  std::vector<std::vector<int>> prefix(m, std::vector<int>(J));
  for (int q = 0; q < m; ++q) {
    int div = 1;
    for (int i = q + 1; i < m; ++i) div *= G;
    for (int idx = 0; idx < J; ++idx) prefix[q][idx] = idx / div;
  }
  std::vector<double> W(J), logW(J);
  for (int idx = 0; idx < J; ++idx) {
    double lw = 0.0;
    for (int r = 0; r < m; ++r) lw += std::log(grid_.weights(digit(idx, m - 1, r)));
    logW[idx] = lw;
    W[idx] = std::exp(lw);
  }

  // item tables over categories x points of the item's factor
  struct ItemTable {
    Eigen::MatrixXd lp, dmu, dup, dlo, dsig, N;
  };
  std::vector<ItemTable> tabs(p);
  for (int j = 0; j < p; ++j) {
    const int q = spec.factor_of(j);
    const int K = spec.categories(j);
    const int P = npts[q];
    const double lam = ps.lambda(j, q);
    const double sig = std::sqrt(ps.theta(j));
    const auto& tau = ps.thresholds[j];
    auto& t = tabs[j];
    t.lp.resize(K, P);
    if (want_grad) {
      t.dmu.resize(K, P);
      t.dup.resize(K, P);
      t.dlo.resize(K, P);
      t.dsig.resize(K, P);
      t.N = Eigen::MatrixXd::Zero(K, P);
    }
    for (int g = 0; g < P; ++g) {
      const double mu = ps.nu(j) + lam * eta[q](g);
      for (int k = 1; k <= K; ++k) {
        auto e = eval_category(lower_threshold(tau, k), upper_threshold(tau, k),
                               mu, sig, want_grad);
        t.lp(k - 1, g) = e.logp;
        if (want_grad) {
          t.dmu(k - 1, g) = e.dmu;
          t.dup(k - 1, g) = e.dup;
          t.dlo(k - 1, g) = e.dlo;
          t.dsig(k - 1, g) = e.dsig;
        }
      }
    }
  }

  const auto& pats = patterns_.patterns;
  const int U = static_cast<int>(pats.rows());
  if (pattern_values) pattern_values->resize(U);

  std::vector<Eigen::VectorXd> logL(m), L(m), post(m);
  for (int q = 0; q < m; ++q) {
    logL[q].resize(npts[q]);
    L[q].resize(npts[q]);
    post[q].resize(npts[q]);
  }
  std::vector<double> term(J);
  double total = 0.0;

  for (int u = 0; u < U; ++u) {
    double shift = 0.0;
    for (int q = 0; q < m; ++q) {
      logL[q].setZero();
      for (int j : spec.items_of(q)) logL[q] += tabs[j].lp.row(pats(u, j) - 1).transpose();
      const double c = logL[q].maxCoeff();
      shift += c;
      L[q] = (logL[q].array() - c).exp();
    }
    double f = 0.0;
    for (int idx = 0; idx < J; ++idx) {
      double t = W[idx];
      for (int q = 0; q < m; ++q) t *= L[q](prefix[q][idx]);
      term[idx] = t;
      f += t;
    }
    if (!(f > 0.0) || !std::isfinite(f)) {
      // joint mass underflowed: redo in the log domain
      double mx = -kInf;
      for (int idx = 0; idx < J; ++idx) {
        double t = logW[idx];
        for (int q = 0; q < m; ++q) t += logL[q](prefix[q][idx]);
        term[idx] = t;
        mx = std::max(mx, t);
      }
      f = 0.0;
      for (int idx = 0; idx < J; ++idx) {
        term[idx] = std::exp(term[idx] - mx);
        f += term[idx];
      }
      shift = mx;
      if (!(f > 0.0)) throw DomainError("marginal likelihood underflow");
    }
    const double ll = std::log(f) + shift;
    const double cnt = patterns_.counts(u);
    total += cnt * ll;
    if (pattern_values) (*pattern_values)(u) = ll;

    if (want_grad) {
      const double wgt = cnt / f;
      for (int q = 0; q < m; ++q) post[q].setZero();
      for (int idx = 0; idx < J; ++idx) {
        const double t = wgt * term[idx];
        for (int q = 0; q < m; ++q) post[q](prefix[q][idx]) += t;
      }
      for (int q = 0; q < m; ++q)
        for (int j : spec.items_of(q))
          tabs[j].N.row(pats(u, j) - 1) += post[q].transpose();
    }
  }

  if (want_grad) {
    Layout lay(spec);
    gradient->setZero(lay.total);
    auto& gr = *gradient;
    Eigen::VectorXd g_kappa = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd gC = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < p; ++j) {
      const int q = spec.factor_of(j);
      const int K = spec.categories(j);
      const int P = npts[q];
      const double lam = ps.lambda(j, q);
      const double sig = std::sqrt(ps.theta(j));
      const auto& t = tabs[j];
      double gnu = 0.0, glam = 0.0, gsig = 0.0;
      Eigen::VectorXd gz = Eigen::VectorXd::Zero(q + 1);
      for (int k = 0; k < K; ++k)
        for (int g = 0; g < P; ++g) {
          const double n = t.N(k, g);
          if (n == 0.0) continue;
          const double nd = n * t.dmu(k, g);
          gnu += nd;
          glam += nd * eta[q](g);
          for (int r = 0; r <= q; ++r) gz(r) += nd * z(digit(g, q, r));
          if (k < K - 1) gr(lay.tau_start[j] + k) += n * t.dup(k, g);
          if (k > 0) gr(lay.tau_start[j] + k - 1) += n * t.dlo(k, g);
          gsig += n * t.dsig(k, g);
        }
      gr(lay.nu + j) = gnu;
      gr(lay.lambda + j) = glam;
      gr(lay.theta + j) = gsig / (2.0 * sig);
      g_kappa(q) += lam * gnu;
      for (int r = 0; r <= q; ++r) gC(q, r) += lam * gz(r);
    }
    // pull the Cholesky-factor gradient back to Phi
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    const Eigen::MatrixXd M = C.transpose() * gC;
    for (int q = 0; q < m; ++q) {
      for (int r = 0; r < q; ++r) T(q, r) = M(q, r);
      T(q, q) = 0.5 * M(q, q);
    }
    const Eigen::MatrixXd Cinv = C.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(m, m));
    const Eigen::MatrixXd X = Cinv.transpose() * T * Cinv;
    for (int q = 0; q < m; ++q) {
      gr(lay.kappa + q) = g_kappa(q);
      gr(lay.cov(q, q)) = X(q, q);
      for (int r = 0; r < q; ++r) gr(lay.cov(q, r)) = X(q, r) + X(r, q);
    }
  }
  return total;
}

double marginal_loglik(const ParameterSet& ps, const ModelSpec& spec,
                       const ResponseMatrix& data, const QuadratureGrid& grid) {
  return MarginalLikelihood(spec, data, grid).value(ps);
}

std::vector<ParamAddress> free_addresses(const ParameterSet& ps,
                                         const ModelSpec& spec) {
  std::vector<ParamAddress> out;
  for (const auto& a : parameter_addresses(spec))
    if (!ps.is_fixed(a)) out.push_back(a);
  return out;
}

Eigen::VectorXd loglik_gradient(const ParameterSet& ps, const ModelSpec& spec,
                                const ResponseMatrix& data,
                                const QuadratureGrid& grid) {
  MarginalLikelihood ml(spec, data, grid);
  Eigen::VectorXd full;
  ml.value_and_gradient(ps, full);
  const auto all = parameter_addresses(spec);
  std::vector<double> out;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (!ps.is_fixed(all[i])) out.push_back(full(static_cast<Eigen::Index>(i)));
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Eigen::VectorXd loglik_gradient_numeric(const ParameterSet& ps,
                                        const ModelSpec& spec,
                                        const ResponseMatrix& data,
                                        const QuadratureGrid& grid, double h) {
  MarginalLikelihood ml(spec, data, grid);
  const auto addrs = free_addresses(ps, spec);
  Eigen::VectorXd g(static_cast<Eigen::Index>(addrs.size()));
  ParameterSet work = ps;
  for (std::size_t i = 0; i < addrs.size(); ++i) {
    const double v = ps.get(addrs[i]);
    work.set(addrs[i], v + h);
    const double up = ml.value(work);
    work.set(addrs[i], v - h);
    const double dn = ml.value(work);
    work.set(addrs[i], v);
    g(static_cast<Eigen::Index>(i)) = (up - dn) / (2.0 * h);
  }
  return g;
}

}  // namespace ordcfa
