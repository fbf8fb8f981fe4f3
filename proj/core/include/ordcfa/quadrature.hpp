#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>

namespace ordcfa {

enum class GridKind { GaussHermite, Rectangular };

std::string to_string(GridKind k);
GridKind parse_grid_kind(std::string_view name);

/// One-dimensional rule on the standardized latent scale, integrating
/// against the standard normal density: sum_g w_g f(z_g) ~ E[f(Z)].
/// The likelihood combines the dimensions as a tensor product and maps the
/// nodes through the Cholesky factor of the latent covariance.
struct QuadratureGrid {
  GridKind kind = GridKind::GaussHermite;
  int dimension = 1;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  int node_count() const noexcept { return static_cast<int>(nodes.size()); }
  long long total_points() const;
};

constexpr int kMaxLatentDimension = 3;
constexpr double kRectangularHalfWidth = 6.0;

/// Gauss-Hermite nodes/weights for the standard normal measure (weights sum
/// to 1). Eigenvalues of the Jacobi matrix, polished by Newton iteration on
/// the orthonormal Hermite recurrence.
void gauss_hermite_rule(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

/// n equally spaced nodes on [-6, 6] with weights phi(z) * h.
void rectangular_rule(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

/// Throws SpecError for dimension outside 1..3 or fewer than 2 nodes.
QuadratureGrid make_grid(GridKind kind, int nodes_per_dimension, int dimension);

/// 61 for one factor, 31 for two, 15 for three.
int default_node_count(int dimension);

QuadratureGrid default_grid(int dimension);

}  // namespace ordcfa
