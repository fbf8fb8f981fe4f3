#pragma once

// Reference computations written directly from the model definitions, kept
// independent of the library's numerical code paths.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "ordcfa/model.hpp"

namespace oracle {

inline long double cdf(long double x) {
  return 0.5L * std::erfc(-x / std::sqrt(2.0L));
}

inline double quantile(double p) {
  long double lo = -40.0L;
  long double hi = 40.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (cdf(mid) < p) lo = mid; else hi = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

inline double normal_density(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// P(Y_j = k | eta) straight from the threshold definition, k = 1..K.
inline double prob(const ordcfa::ParameterSet& ps, const ordcfa::ModelSpec& spec,
                   int j, int k, const Eigen::VectorXd& eta) {
  const int q = spec.factor_of(j);
  const int K = spec.categories(j);
  const long double mu = ps.nu(j) + ps.lambda(j, q) * eta(q);
  const long double sd = std::sqrt(static_cast<long double>(ps.theta(j)));
  const long double up = k == K ? 1.0L : cdf((ps.thresholds[j](k - 1) - mu) / sd);
  const long double lo = k == 1 ? 0.0L : cdf((ps.thresholds[j](k - 2) - mu) / sd);
  return static_cast<double>(up - lo);
}

inline double conditional_likelihood(const ordcfa::ParameterSet& ps,
                                     const ordcfa::ModelSpec& spec,
                                     const Eigen::VectorXi& row,
                                     const Eigen::VectorXd& eta) {
  double v = 1.0;
  for (int j = 0; j < spec.item_count(); ++j) v *= prob(ps, spec, j, row(j), eta);
  return v;
}

/// log of the one-factor marginal likelihood by the trapezoid rule on
/// kappa +/- 12 sd with `points` nodes.
inline double marginal_1d(const ordcfa::ParameterSet& ps, const ordcfa::ModelSpec& spec,
                          const Eigen::VectorXi& row, int points = 10001) {
  const double sd = std::sqrt(ps.phi(0, 0));
  const double a = ps.kappa(0) - 12.0 * sd;
  const double h = 24.0 * sd / (points - 1);
  Eigen::VectorXd eta(1);
  long double sum = 0.0L;
  for (int i = 0; i < points; ++i) {
    eta(0) = a + h * i;
    const double w = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    sum += w * conditional_likelihood(ps, spec, row, eta) *
           normal_density((eta(0) - ps.kappa(0)) / sd) / sd;
  }
  return std::log(static_cast<double>(sum * h));
}

/// log of the two-factor marginal likelihood by a product trapezoid rule
/// on kappa +/- 8 sd per axis, with the bivariate normal density written out.
inline double marginal_2d(const ordcfa::ParameterSet& ps, const ordcfa::ModelSpec& spec,
                          const Eigen::VectorXi& row, int points = 801) {
  const double s1 = std::sqrt(ps.phi(0, 0));
  const double s2 = std::sqrt(ps.phi(1, 1));
  const double rho = ps.phi(1, 0) / (s1 * s2);
  const double a1 = ps.kappa(0) - 8.0 * s1;
  const double a2 = ps.kappa(1) - 8.0 * s2;
  const double h1 = 16.0 * s1 / (points - 1);
  const double h2 = 16.0 * s2 / (points - 1);
  const double norm = 1.0 / (2.0 * std::numbers::pi * s1 * s2 * std::sqrt(1.0 - rho * rho));
  // item likelihoods factor by dimension
  std::vector<double> L1(points), L2(points);
  Eigen::VectorXd eta(2);
  for (int i = 0; i < points; ++i) {
    eta << a1 + h1 * i, a2 + h2 * i;
    L1[i] = 1.0;
    L2[i] = 1.0;
    for (int j = 0; j < spec.item_count(); ++j) {
      const double pj = prob(ps, spec, j, row(j), eta);
      (spec.factor_of(j) == 0 ? L1[i] : L2[i]) *= pj;
    }
  }
  long double sum = 0.0L;
  for (int a = 0; a < points; ++a) {
    const double x = (a1 + h1 * a - ps.kappa(0)) / s1;
    const double wa = (a == 0 || a == points - 1) ? 0.5 : 1.0;
    for (int b = 0; b < points; ++b) {
      const double y = (a2 + h2 * b - ps.kappa(1)) / s2;
      const double wb = (b == 0 || b == points - 1) ? 0.5 : 1.0;
      const double quad = (x * x - 2.0 * rho * x * y + y * y) / (1.0 - rho * rho);
      sum += wa * wb * L1[a] * L2[b] * norm * std::exp(-0.5 * quad);
    }
  }
  return std::log(static_cast<double>(sum * h1 * h2));
}

/// Single-factor traditional -> integer conversion for K >= 3 items, from
/// the outer-threshold anchors and the sum/mean conditions.
struct IntegerConversion {
  double D = 0.0;
  double beta = 0.0;
  Eigen::VectorXd Delta, gamma, lambda, nu;
  std::vector<Eigen::VectorXd> thresholds;
  double kappa = 0.0;
  double phi = 0.0;
};

inline IntegerConversion integer_from_traditional(const Eigen::VectorXd& lambda,
                                                  const std::vector<Eigen::VectorXd>& T) {
  const int p = static_cast<int>(lambda.size());
  IntegerConversion c;
  c.Delta.resize(p);
  c.gamma.resize(p);
  double ratio = 0.0;
  for (int j = 0; j < p; ++j) {
    const int K = static_cast<int>(T[j].size()) + 1;
    c.Delta(j) = (T[j](K - 2) - T[j](0)) / (K - 2.0);
    c.gamma(j) = 1.5 - T[j](0) / c.Delta(j);
    ratio += lambda(j) / c.Delta(j);
  }
  c.D = p / ratio;
  c.beta = -c.gamma.sum() / ratio;
  c.lambda = lambda.cwiseQuotient(c.Delta) * c.D;
  c.nu = (lambda * c.beta).cwiseQuotient(c.Delta) + c.gamma;
  for (int j = 0; j < p; ++j)
    c.thresholds.push_back((T[j] / c.Delta(j)).array() + c.gamma(j));
  c.kappa = -c.beta / c.D;
  c.phi = 1.0 / (c.D * c.D);
  return c;
}

/// Golden-section maximization of a unimodal function on [a, b].
template <class F>
double argmax_1d(F f, double a, double b, double tol = 1e-10) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d; d = c; fd = fc; c = b - g * (b - a); fc = f(c);
    } else {
      a = c; c = d; fc = fd; d = a + g * (b - a); fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Random positive definite correlation matrix with off-diagonals bounded
/// by `spread` in magnitude before normalization.
inline Eigen::MatrixXd random_correlation(int m, std::mt19937_64& rng, double spread = 0.5) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
  for (int q = 0; q < m; ++q)
    for (int r = 0; r < q; ++r) A(q, r) = u(rng);
  Eigen::MatrixXd S = A * A.transpose();
  Eigen::VectorXd d = S.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * S * d.asDiagonal();
}

}  // namespace oracle
