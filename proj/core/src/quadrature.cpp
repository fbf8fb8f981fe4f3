#include "ordcfa/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "ordcfa/errors.hpp"

namespace ordcfa {

std::string to_string(GridKind k) {
  return k == GridKind::GaussHermite ? "gauss-hermite" : "rectangular";
}

GridKind parse_grid_kind(std::string_view name) {
  if (name == "gauss-hermite" || name == "gh") return GridKind::GaussHermite;
  if (name == "rectangular" || name == "rect") return GridKind::Rectangular;
  throw SpecError("unknown quadrature kind '" + std::string(name) + "'");
}

long long QuadratureGrid::total_points() const {
  long long t = 1;
  for (int d = 0; d < dimension; ++d) t *= node_count();
  return t;
}

namespace {

// Orthonormal Hermite values h_{n-1}(x), h_n(x) for the N(0,1) measure,
// plus sum_{k<n} h_k(x)^2.
void hermite_eval(int n, double x, double& hn, double& hn1, double& sumsq) {
  double prev = 0.0;
  double cur = 1.0;
  sumsq = 1.0;
  for (int k = 0; k < n; ++k) {
    double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                  std::sqrt(static_cast<double>(k + 1));
    prev = cur;
    cur = next;
    if (k + 1 < n) sumsq += cur * cur;
  }
  hn = cur;
  hn1 = prev;
}

}  // namespace

void gauss_hermite_rule(int n, Eigen::VectorXd& nodes,
                        Eigen::VectorXd& weights) {
  if (n < 1) throw SpecError("Gauss-Hermite rule needs at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    J(k, k - 1) = std::sqrt(static_cast<double>(k));
    J(k - 1, k) = J(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes = es.eigenvalues();
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = nodes(i);
    double hn, hn1, s;
    for (int it = 0; it < 4; ++it) {
      hermite_eval(n, x, hn, hn1, s);
      double d = std::sqrt(static_cast<double>(n)) * hn1;
      if (d == 0.0) break;
      double step = hn / d;
      x -= step;
      if (std::abs(step) < 1e-15 * (1.0 + std::abs(x))) break;
    }
    hermite_eval(n, x, hn, hn1, s);
    nodes(i) = x;
    weights(i) = 1.0 / s;
  }
  // symmetrize to remove rounding asymmetry
  for (int i = 0; i < n / 2; ++i) {
    double x = 0.5 * (nodes(n - 1 - i) - nodes(i));
    double w = 0.5 * (weights(i) + weights(n - 1 - i));
    nodes(i) = -x;
    nodes(n - 1 - i) = x;
    weights(i) = weights(n - 1 - i) = w;
  }
  if (n % 2 == 1) nodes(n / 2) = 0.0;
  weights /= weights.sum();
}

void rectangular_rule(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 2) throw SpecError("rectangular rule needs at least two nodes");
  nodes = Eigen::VectorXd::LinSpaced(n, -kRectangularHalfWidth,
                                     kRectangularHalfWidth);
  const double h = 2.0 * kRectangularHalfWidth / (n - 1);
  weights.resize(n);
  for (int i = 0; i < n; ++i)
    weights(i) = h * std::exp(-0.5 * nodes(i) * nodes(i)) /
                 std::sqrt(2.0 * std::numbers::pi);
}

QuadratureGrid make_grid(GridKind kind, int nodes_per_dimension,
                         int dimension) {
  if (dimension < 1 || dimension > kMaxLatentDimension)
    throw SpecError("tensor-product quadrature supports 1 to " +
                    std::to_string(kMaxLatentDimension) +
                    " latent dimensions, got " + std::to_string(dimension));
  if (nodes_per_dimension < 2)
    throw SpecError("quadrature needs at least 2 nodes per dimension");
  QuadratureGrid g;
  g.kind = kind;
  g.dimension = dimension;
  if (kind == GridKind::GaussHermite)
    gauss_hermite_rule(nodes_per_dimension, g.nodes, g.weights);
  else
    rectangular_rule(nodes_per_dimension, g.nodes, g.weights);
  return g;
}

int default_node_count(int dimension) {
  switch (dimension) {
    case 1: return 61;
    case 2: return 31;
    default: return 15;
  }
}

QuadratureGrid default_grid(int dimension) {
  return make_grid(GridKind::GaussHermite, default_node_count(dimension),
                   dimension);
}

}  // namespace ordcfa
