#include <doctest.h>

#include <cmath>
#include <random>

#include "ordcfa/errors.hpp"
#include "ordcfa/likelihood.hpp"
#include "ordcfa/simulate.hpp"
#include "ordcfa/transform.hpp"
#include "oracles.hpp"

using namespace ordcfa;

namespace {

ParameterSet random_params(const ModelSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto ps = ParameterSet::defaults(spec);
  for (int j = 0; j < spec.item_count(); ++j) {
    ps.nu(j) = u(rng) - 0.5;
    ps.lambda(j, spec.factor_of(j)) = 0.4 + u(rng);
    ps.theta(j) = 0.5 + u(rng);
    double t = -1.5 + 0.5 * u(rng);
    for (int k = 0; k < spec.threshold_count(j); ++k) {
      ps.thresholds[j](k) = t;
      t += 0.4 + u(rng);
    }
  }
  for (int q = 0; q < spec.factor_count(); ++q) ps.kappa(q) = u(rng) - 0.5;
  Eigen::MatrixXd R = oracle::random_correlation(spec.factor_count(), rng);
  Eigen::VectorXd s(spec.factor_count());
  for (int q = 0; q < spec.factor_count(); ++q) s(q) = 0.6 + u(rng);
  ps.phi = s.asDiagonal() * R * s.asDiagonal();
  return ps;
}

ResponseMatrix random_rows(const ModelSpec& spec, int n, std::mt19937_64& rng) {
  Eigen::MatrixXi y(n, spec.item_count());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < spec.item_count(); ++j)
      y(i, j) = std::uniform_int_distribution<int>(1, spec.categories(j))(rng);
  return make_responses(y, spec);
}

}  // namespace

TEST_CASE("normal helpers") {
  for (double x : {-9.0, -3.0, -0.5, 0.0, 1.2, 4.0, 8.5}) {
    CHECK(normal_cdf(x) == doctest::Approx(static_cast<double>(oracle::cdf(x))).epsilon(1e-13));
    CHECK(normal_sf(x) == doctest::Approx(static_cast<double>(oracle::cdf(-x))).epsilon(1e-13));
  }
  for (double p : {1e-10, 0.025, 0.25, 0.5, 0.9, 1 - 1e-9})
    CHECK(normal_quantile(p) == doctest::Approx(oracle::quantile(p)).epsilon(1e-9));
  CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
  CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
  CHECK(normal_interval(9.0, 10.0) > 0.0);
  CHECK(normal_interval(9.0, 10.0) ==
        doctest::Approx(static_cast<double>(oracle::cdf(-9.0L) - oracle::cdf(-10.0L))).epsilon(1e-10));
}

TEST_CASE("category probability examples") {
  Eigen::VectorXd eta(1);
  {
    auto spec = single_factor_spec(1, 2);
    auto ps = ParameterSet::defaults(spec);
    ps.lambda(0, 0) = 0.0;
    ps.thresholds[0](0) = 0.0;
    for (double e : {-3.0, 0.0, 5.0}) {
      eta(0) = e;
      CHECK(category_prob(ps, spec, 0, 1, eta) == doctest::Approx(0.5));
      CHECK(category_prob(ps, spec, 0, 2, eta) == doctest::Approx(0.5));
    }
    Eigen::VectorXi row(1);
    row << 1;
    CHECK(conditional_loglik(ps, spec, row, eta) == doctest::Approx(std::log(0.5)));
  }
  {
    auto spec = single_factor_spec(2, 3);
    auto ps = ParameterSet::defaults(spec);
    ps.lambda.setConstant(1.0);
    for (auto& t : ps.thresholds) t << -1.0, 1.0;
    eta(0) = 0.0;
    CHECK(category_prob(ps, spec, 0, 2, eta) == doctest::Approx(0.682689).epsilon(1e-6));
    Eigen::VectorXi row(2);
    row << 2, 2;
    CHECK(conditional_loglik(ps, spec, row, eta) ==
          doctest::Approx(2.0 * std::log(0.6826894921370859)).epsilon(1e-12));
  }
  {
    auto spec = single_factor_spec(1, 5);
    auto ps = ParameterSet::defaults(spec);
    ps.lambda(0, 0) = 1.0;
    ps.thresholds[0] << 1.5, 2.5, 3.5, 4.5;
    eta(0) = 3.0;
    CHECK(category_prob(ps, spec, 0, 3, eta) == doctest::Approx(0.382925).epsilon(1e-6));
    CHECK(category_prob(ps, spec, 0, 2, eta) == doctest::Approx(0.241730).epsilon(1e-6));
    CHECK(category_prob(ps, spec, 0, 4, eta) == doctest::Approx(0.241730).epsilon(1e-6));
  }
}

TEST_CASE("category probability rejects invalid parameters") {
  auto spec = single_factor_spec(1, 3);
  auto ps = ParameterSet::defaults(spec);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(1);
  auto bad = ps;
  bad.thresholds[0] << 1.0, 1.0;
  CHECK_THROWS_AS(category_prob(bad, spec, 0, 1, eta), DomainError);
  bad = ps;
  bad.theta(0) = -0.1;
  CHECK_THROWS_AS(category_prob(bad, spec, 0, 1, eta), DomainError);
}

TEST_CASE("conditional likelihood matches direct recomputation") {
  std::mt19937_64 rng(11);
  auto spec = clustered_spec({3, 2}, 4);
  for (int rep = 0; rep < 20; ++rep) {
    auto ps = random_params(spec, rng);
    auto data = random_rows(spec, 1, rng);
    Eigen::VectorXd eta(2);
    eta << std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng);
    Eigen::VectorXi row = data.y.row(0).transpose();
    const double direct = std::log(oracle::conditional_likelihood(ps, spec, row, eta));
    CHECK(conditional_loglik(ps, spec, row, eta) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("conditional and posterior derivatives match finite differences") {
  std::mt19937_64 rng(12);
  auto spec = clustered_spec({3, 3}, 5);
  for (int rep = 0; rep < 10; ++rep) {
    auto ps = random_params(spec, rng);
    auto data = random_rows(spec, 1, rng);
    Eigen::VectorXi row = data.y.row(0).transpose();
    Eigen::VectorXd eta(2);
    eta << 0.3 * rep - 1.0, 0.5 - 0.2 * rep;
    auto g = conditional_loglik_gradient(ps, spec, row, eta);
    auto gp = posterior_gradient(ps, spec, row, eta);
    auto H = posterior_hessian(ps, spec, row, eta);
    const double h = 1e-5;
    for (int q = 0; q < 2; ++q) {
      Eigen::VectorXd up = eta, dn = eta;
      up(q) += h;
      dn(q) -= h;
      const double fd = (conditional_loglik(ps, spec, row, up) -
                         conditional_loglik(ps, spec, row, dn)) / (2 * h);
      CHECK(g(q) == doctest::Approx(fd).epsilon(1e-6));
      const double fdp = (posterior_logdensity(ps, spec, row, up) -
                          posterior_logdensity(ps, spec, row, dn)) / (2 * h);
      CHECK(gp(q) == doctest::Approx(fdp).epsilon(1e-6));
      Eigen::VectorXd dg = (posterior_gradient(ps, spec, row, up) -
                            posterior_gradient(ps, spec, row, dn)) / (2 * h);
      for (int r = 0; r < 2; ++r) CHECK(H(r, q) == doctest::Approx(dg(r)).epsilon(1e-5));
    }
  }
}

TEST_CASE("posterior with zero loadings peaks at the latent mean") {
  auto spec = single_factor_spec(3, 4);
  auto ps = ParameterSet::defaults(spec);
  ps.lambda.setZero();
  ps.kappa(0) = 0.8;
  Eigen::VectorXi row(3);
  row << 1, 4, 2;
  Eigen::VectorXd eta(1);
  eta << 0.8;
  CHECK(std::abs(posterior_gradient(ps, spec, row, eta)(0)) < 1e-14);
}

TEST_CASE("one-factor marginal matches a fine trapezoid oracle") {
  std::mt19937_64 rng(13);
  auto spec = single_factor_spec(4, 4);
  auto grid = make_grid(GridKind::Rectangular, 61, 1);
  for (int rep = 0; rep < 5; ++rep) {
    auto ps = random_params(spec, rng);
    auto data = random_rows(spec, 6, rng);
    MarginalLikelihood ml(spec, data, grid);
    auto rows = ml.row_values(ps);
    for (int i = 0; i < data.rows(); ++i) {
      Eigen::VectorXi row = data.y.row(i).transpose();
      CHECK(std::abs(rows(i) - oracle::marginal_1d(ps, spec, row)) < 1e-6);
    }
  }
}

TEST_CASE("two-factor marginal matches a brute-force oracle") {
  std::mt19937_64 rng(14);
  auto spec = clustered_spec({2, 2}, 3);
  auto grid = make_grid(GridKind::GaussHermite, 61, 2);
  for (int rep = 0; rep < 3; ++rep) {
    auto ps = random_params(spec, rng);
    auto data = random_rows(spec, 3, rng);
    MarginalLikelihood ml(spec, data, grid);
    auto rows = ml.row_values(ps);
    for (int i = 0; i < data.rows(); ++i) {
      Eigen::VectorXi row = data.y.row(i).transpose();
      CHECK(std::abs(rows(i) - oracle::marginal_2d(ps, spec, row)) < 1e-6);
    }
  }
}

TEST_CASE("zero loadings make marginal equal conditional") {
  auto spec = single_factor_spec(3, 4);
  std::mt19937_64 rng(15);
  auto ps = random_params(spec, rng);
  ps.lambda.setZero();
  auto data = random_rows(spec, 4, rng);
  auto grid = default_grid(1);
  MarginalLikelihood ml(spec, data, grid);
  auto rows = ml.row_values(ps);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(1, 1.7);
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXi row = data.y.row(i).transpose();
    CHECK(rows(i) == doctest::Approx(conditional_loglik(ps, spec, row, eta)).epsilon(1e-12));
  }
}

TEST_CASE("marginal likelihood is additive over respondents") {
  auto spec = single_factor_spec(3, 4);
  std::mt19937_64 rng(16);
  auto ps = random_params(spec, rng);
  auto data = random_rows(spec, 2, rng);
  auto grid = default_grid(1);
  const double both = marginal_loglik(ps, spec, data, grid);
  double sum = 0.0;
  for (int i = 0; i < 2; ++i)
    sum += marginal_loglik(ps, spec, make_responses(data.y.row(i), spec), grid);
  CHECK(both == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("pattern collapsing") {
  auto spec = single_factor_spec(2, 3);
  Eigen::MatrixXi y(5, 2);
  y << 1, 2, 3, 3, 1, 2, 2, 2, 3, 3;
  auto table = collapse_patterns(make_responses(y, spec));
  CHECK(table.patterns.rows() == 3);
  CHECK(table.counts.sum() == 5.0);
  CHECK(table.row_pattern == std::vector<int>{0, 1, 0, 2, 1});
  Eigen::MatrixXi bad(1, 2);
  bad << 0, 2;
  CHECK_THROWS_AS(make_responses(bad, spec), SpecError);
  bad << 1, 4;
  CHECK_THROWS_AS(make_responses(bad, spec), SpecError);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(17);
  for (auto sizes : {std::vector<int>{2}, std::vector<int>{2, 3}, std::vector<int>{2, 2, 2}}) {
    auto spec = clustered_spec(sizes, 3);
    auto ps = random_params(spec, rng);
    auto data = random_rows(spec, 40, rng);
    auto grid = make_grid(GridKind::GaussHermite, sizes.size() == 3 ? 9 : 21,
                          static_cast<int>(sizes.size()));
    auto g = loglik_gradient(ps, spec, data, grid);
    auto n = loglik_gradient_numeric(ps, spec, data, grid, 1e-5);
    REQUIRE(g.size() == n.size());
    for (int i = 0; i < g.size(); ++i)
      CHECK_MESSAGE(std::abs(g(i) - n(i)) < 1e-5 * std::max(1.0, std::abs(n(i))),
                    "sizes=" << sizes.size() << " i=" << i);
  }
}

TEST_CASE("fixed parameters have no gradient entries") {
  auto spec = single_factor_spec(3, 3);
  auto ps = ParameterSet::defaults(spec);
  const auto total = parameter_addresses(spec).size();
  CHECK(free_addresses(ps, spec).size() == total);
  apply_fixes(ps, make_constraints(spec, Regime::Traditional));
  auto free = free_addresses(ps, spec);
  CHECK(free.size() == total - 8);
  for (const auto& a : free) CHECK_FALSE(ps.is_fixed(a));
  std::mt19937_64 rng(18);
  auto data = random_rows(spec, 10, rng);
  CHECK(loglik_gradient(ps, spec, data, default_grid(1)).size() ==
        static_cast<Eigen::Index>(free.size()));
}

TEST_CASE("marginal likelihood is invariant under equivalence transforms") {
  std::mt19937_64 rng(19);
  for (auto sizes : {std::vector<int>{4}, std::vector<int>{3, 3}}) {
    auto spec = clustered_spec(sizes, 4);
    const int m = spec.factor_count();
    auto ps = random_params(spec, rng);
    auto data = random_rows(spec, 50, rng);
    auto grid = default_grid(m);
    TransformSet t = TransformSet::identity(spec);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int q = 0; q < m; ++q) {
      t.D(q) = u(rng);
      t.beta(q) = u(rng) - 1.2;
    }
    for (int j = 0; j < spec.item_count(); ++j) {
      t.Delta(j) = u(rng);
      t.gamma(j) = 3 * (u(rng) - 1.2);
    }
    auto moved = apply_transform(ps, t, spec);
    CHECK(marginal_loglik(moved, spec, data, grid) ==
          doctest::Approx(marginal_loglik(ps, spec, data, grid)).epsilon(1e-12));
  }
}

TEST_CASE("indefinite latent covariance is rejected") {
  auto spec = clustered_spec({2, 2}, 3);
  auto ps = ParameterSet::defaults(spec);
  ps.phi << 1.0, 1.2, 1.2, 1.0;
  std::mt19937_64 rng(20);
  auto data = random_rows(spec, 3, rng);
  CHECK_THROWS_AS(marginal_loglik(ps, spec, data, default_grid(2)), DomainError);
}
