#include "ordcfa/identification.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ordcfa/errors.hpp"
#include "ordcfa/transform.hpp"

namespace ordcfa {

std::string to_string(IdentificationVerdict v) {
  switch (v) {
    case IdentificationVerdict::Identifying: return "identifying";
    case IdentificationVerdict::NotIdentifying: return "not identifying";
    case IdentificationVerdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

ParameterSet random_traditional_parameters(const ModelSpec& spec,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  const int p = spec.item_count();
  const int m = spec.factor_count();
  ParameterSet ps = ParameterSet::defaults(spec);
  for (int j = 0; j < p; ++j) {
    ps.lambda(j, spec.factor_of(j)) = 0.4 + 0.9 * unif(rng);
    auto& t = ps.thresholds[j];
    double v = -1.5 + 0.8 * norm(rng);
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      t(k) = v;
      v += 0.3 + 1.2 * unif(rng);
    }
  }
  // correlation from a random factor with bounded off-diagonals
  Eigen::MatrixXd B(m, m);
  for (int q = 0; q < m; ++q)
    for (int r = 0; r < m; ++r) B(q, r) = (q == r ? 2.0 : 0.0) + 0.5 * norm(rng);
  Eigen::MatrixXd S = B * B.transpose();
  Eigen::VectorXd d = S.diagonal().cwiseSqrt().cwiseInverse();
  ps.phi = d.asDiagonal() * S * d.asDiagonal();
  for (int q = 0; q < m; ++q) ps.phi(q, q) = 1.0;
  return ps;
}

namespace {

Eigen::VectorXd residuals_at(const ParameterSet& ps, const ModelSpec& spec,
                             const ConstraintSet& cs, const Eigen::VectorXd& x) {
  return constraint_residuals(cs, apply_transform(ps, unpack_transform(x, spec), spec), spec);
}

bool satisfying_point(const ModelSpec& spec, const ConstraintSet& cs,
                      std::uint64_t seed, ParameterSet& out) {
  for (int attempt = 0; attempt < 5; ++attempt) {
    ParameterSet base = random_traditional_parameters(spec, seed + 7919 * attempt);
    try {
      auto r = from_traditional(base, spec, cs);
      if (r.residual < 1e-9) {
        out = r.params;
        return true;
      }
    } catch (const DomainError&) {
    }
    auto s = solve_transform(base, spec, cs, TransformSet::identity(spec));
    if (s.converged) {
      out = apply_transform(base, s.transform, spec);
      return true;
    }
  }
  return false;
}

}  // namespace

IdentificationReport verify_identification(const ModelSpec& spec,
                                           const ConstraintSet& cs,
                                           const IdentificationOptions& opt) {
  IdentificationReport rep;
  const int p = spec.item_count();
  const int m = spec.factor_count();
  rep.constraint_count = cs.count();
  rep.minimal_count = static_cast<std::size_t>(2 * (p + m));
  rep.count_matches = rep.constraint_count == rep.minimal_count;
  const int n = 2 * (p + m);
  rep.transform_dimension = n;

  ParameterSet P;
  if (!satisfying_point(spec, cs, opt.seed, P)) {
    rep.verdict = IdentificationVerdict::Inconclusive;
    rep.detail = "could not construct a parameter set satisfying the constraints";
    return rep;
  }

  // Jacobian of the residuals in transform coordinates at the identity
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
  const Eigen::Index rows = static_cast<Eigen::Index>(cs.count());
  Eigen::MatrixXd J(rows, n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd xp = x0, xm = x0;
    const double h = 1e-6;
    xp(i) += h;
    xm(i) -= h;
    J.col(i) = (residuals_at(P, spec, cs, xp) - residuals_at(P, spec, cs, xm)) / (2 * h);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-7 * std::max(1.0, smax)) ++rank;
  rep.jacobian_rank = rank;

  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> norm(0.0, 1.0);

  auto try_from = [&](const Eigen::VectorXd& start) -> std::optional<Eigen::VectorXd> {
    auto s = solve_transform(P, spec, cs, unpack_transform(start, spec), opt.tolerance);
    ++rep.starts_tried;
    if (!s.converged) return std::nullopt;
    ++rep.starts_converged;
    return pack_transform(s.transform);
  };

  if (rank < n) {
    // move along each null direction and pull back onto the constraints
    for (int c = rank; c < n; ++c) {
      Eigen::VectorXd v = svd.matrixV().col(c);
      for (double eps : {0.3, -0.3, 0.05}) {
        auto sol = try_from(eps * v / v.cwiseAbs().maxCoeff());
        if (sol && sol->cwiseAbs().maxCoeff() > opt.distinct) {
          rep.verdict = IdentificationVerdict::NotIdentifying;
          rep.witness = unpack_transform(*sol, spec);
          rep.detail = "constraint Jacobian has rank " + std::to_string(rank) +
                       " < " + std::to_string(n) +
                       "; found a non-identity transform preserving the constraints";
          return rep;
        }
      }
    }
    rep.verdict = IdentificationVerdict::Inconclusive;
    rep.detail = "constraint Jacobian is rank deficient but no non-identity "
                 "solution was found";
    return rep;
  }

  for (int s = 0; s < opt.starts; ++s) {
    Eigen::VectorXd start(n);
    for (int i = 0; i < n; ++i) start(i) = (i < m + p ? 0.5 : 1.0) * norm(rng);
    auto sol = try_from(start);
    if (sol && sol->cwiseAbs().maxCoeff() > opt.distinct) {
      rep.verdict = IdentificationVerdict::NotIdentifying;
      rep.witness = unpack_transform(*sol, spec);
      rep.detail = "a second, non-identity transform satisfies the constraints";
      return rep;
    }
  }
  if (rep.starts_converged == 0) {
    rep.verdict = IdentificationVerdict::Inconclusive;
    rep.detail = "no multistart solve converged";
    return rep;
  }
  rep.verdict = IdentificationVerdict::Identifying;
  rep.detail = "full-rank constraint Jacobian; every converged start (" +
               std::to_string(rep.starts_converged) + " of " +
               std::to_string(rep.starts_tried) + ") returned the identity";
  return rep;
}

}  // namespace ordcfa
