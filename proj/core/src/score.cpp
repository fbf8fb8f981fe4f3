#include "ordcfa/score.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "ordcfa/errors.hpp"

namespace ordcfa {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Newton direction for a concave objective; falls back to a shifted system
// when the Hessian is not negative definite.
Eigen::VectorXd ascent_direction(const Eigen::VectorXd& g,
                                 const Eigen::MatrixXd& h) {
  const Eigen::Index m = g.size();
  Eigen::MatrixXd neg = -h;
  Eigen::LLT<Eigen::MatrixXd> llt(neg);
  if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 1e-150)
    return llt.solve(g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(neg);
  const double shift = std::max(0.0, -es.eigenvalues().minCoeff()) + 1e-10;
  return (neg + shift * Eigen::MatrixXd::Identity(m, m)).ldlt().solve(g);
}

}  // namespace

LatentState map_score(const ParameterSet& ps, const ModelSpec& spec,
                      const Eigen::Ref<const Eigen::VectorXi>& row,
                      const ScoreOptions& opt) {
  LatentState eta = ps.kappa;
  double f = posterior_logdensity(ps, spec, row, eta);
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd g = posterior_gradient(ps, spec, row, eta);
    const Eigen::MatrixXd h = posterior_hessian(ps, spec, row, eta);
    const Eigen::VectorXd step = ascent_direction(g, h);
    double t = 1.0;
    LatentState trial = eta + step;
    double ft = posterior_logdensity(ps, spec, row, trial);
    while (!(ft >= f) && t > 1e-12) {
      t *= 0.5;
      trial = eta + t * step;
      ft = posterior_logdensity(ps, spec, row, trial);
    }
    if (!(ft >= f)) {
      if (g.cwiseAbs().maxCoeff() < 1e-6) return eta;
      throw ConvergenceError("MAP line search failed (gradient " +
                             shortest(g.cwiseAbs().maxCoeff()) + ")");
    }
    const double moved = (t * step).cwiseAbs().maxCoeff();
    eta = trial;
    f = ft;
    if (moved < opt.tolerance) return eta;
  }
  throw ConvergenceError("MAP Newton iteration did not converge in " +
                         std::to_string(opt.max_iterations) + " iterations");
}

namespace {

// +1 or -1 when factor q's part of the conditional likelihood increases
// without bound in that direction, else 0.
int unbounded_direction(const ParameterSet& ps, const ModelSpec& spec,
                        const Eigen::Ref<const Eigen::VectorXi>& row, int q) {
  int direction = 0;
  for (int j : spec.items_of(q)) {
    const double lambda = ps.lambda(j, q);
    if (lambda == 0.0) continue;
    int d = 0;
    if (row(j) == 1) d = lambda > 0 ? -1 : 1;
    if (row(j) == spec.categories(j)) d = lambda > 0 ? 1 : -1;
    if (d == 0 || (direction != 0 && d != direction)) return 0;
    direction = d;
  }
  return direction;
}

}  // namespace

MlScore ml_score(const ParameterSet& ps, const ModelSpec& spec,
                 const Eigen::Ref<const Eigen::VectorXi>& row,
                 const ScoreOptions& opt) {
  const int m = spec.factor_count();
  Eigen::VectorXd lo(m), hi(m);
  for (int q = 0; q < m; ++q) {
    const double sd = std::sqrt(ps.phi(q, q));
    lo(q) = ps.kappa(q) - opt.bound_sds * sd;
    hi(q) = ps.kappa(q) + opt.bound_sds * sd;
  }
  auto clamp = [&](Eigen::VectorXd v) {
    return Eigen::VectorXd(v.cwiseMax(lo).cwiseMin(hi));
  };
  LatentState eta = ps.kappa;
  double f = conditional_loglik(ps, spec, row, eta);
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd g = conditional_loglik_gradient(ps, spec, row, eta);
    const Eigen::MatrixXd h = conditional_loglik_hessian(ps, spec, row, eta);
    Eigen::VectorXd step = ascent_direction(g, h);
    // coordinates pinned at a bound with an outward gradient stay put
    for (int q = 0; q < m; ++q)
      if ((eta(q) >= hi(q) && g(q) >= 0.0) || (eta(q) <= lo(q) && g(q) <= 0.0))
        step(q) = 0.0;
    double t = 1.0;
    LatentState trial = clamp(eta + step);
    double ft = conditional_loglik(ps, spec, row, trial);
    while (!(ft >= f) && t > 1e-12) {
      t *= 0.5;
      trial = clamp(eta + t * step);
      ft = conditional_loglik(ps, spec, row, trial);
    }
    if (!(ft >= f)) break;
    const double moved = (trial - eta).cwiseAbs().maxCoeff();
    eta = trial;
    f = ft;
    if (moved < opt.tolerance) break;
  }
  MlScore out;
  out.eta = eta;
  out.direction = Eigen::VectorXi::Zero(m);
  for (int q = 0; q < m; ++q) {
    out.direction(q) = unbounded_direction(ps, spec, row, q);
    if (out.direction(q) != 0) out.eta(q) = out.direction(q) > 0 ? hi(q) : lo(q);
  }
  out.diverged = (out.direction.array() != 0).any();
  return out;
}

double observed_average(const Eigen::Ref<const Eigen::VectorXi>& row) {
  if (row.size() == 0) throw SpecError("cannot average an empty response row");
  return static_cast<double>(row.sum()) / static_cast<double>(row.size());
}

ParameterSet sumscore_params(const ModelSpec& spec, std::optional<double> variance) {
  ConstraintOptions o;
  o.sumscore_variance = variance;
  auto cs = make_constraints(spec, Regime::SumscoreRasch, o);
  ParameterSet ps = ParameterSet::defaults(spec);
  apply_fixes(ps, cs);
  return ps;
}

std::string to_string(ScoreMethod m) { return m == ScoreMethod::Map ? "map" : "ml"; }

ScoreMethod parse_score_method(std::string_view name) {
  if (name == "map") return ScoreMethod::Map;
  if (name == "ml") return ScoreMethod::Ml;
  throw SpecError("unknown scoring method '" + std::string(name) +
                  "' (expected map or ml)");
}

std::vector<RowScore> score_rows(const ParameterSet& ps, const ModelSpec& spec,
                                 const ResponseMatrix& data, ScoreMethod method,
                                 const ScoreOptions& opt, unsigned threads) {
  validate_parameters(ps, spec);
  const PatternTable table = collapse_patterns(data);
  const auto u = static_cast<std::size_t>(table.patterns.rows());
  std::vector<RowScore> unique(u);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(u, 1)));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < u; i = next++) {
      try {
        const Eigen::VectorXi row = table.patterns.row(static_cast<Eigen::Index>(i)).transpose();
        RowScore& s = unique[i];
        s.average = observed_average(row);
        if (method == ScoreMethod::Map) {
          s.eta = map_score(ps, spec, row, opt);
          s.direction = Eigen::VectorXi::Zero(spec.factor_count());
        } else {
          auto r = ml_score(ps, spec, row, opt);
          s.eta = r.eta;
          s.diverged = r.diverged;
          s.direction = r.direction;
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<RowScore> out;
  out.reserve(table.row_pattern.size());
  for (int idx : table.row_pattern) out.push_back(unique[static_cast<std::size_t>(idx)]);
  return out;
}

namespace {

bool interchangeable_items(const ModelSpec& spec, const ParameterSet& ps) {
  for (int j = 1; j < spec.item_count(); ++j) {
    if (ps.nu(j) != ps.nu(0) || ps.lambda(j, 0) != ps.lambda(0, 0) ||
        ps.theta(j) != ps.theta(0) || ps.thresholds[j] != ps.thresholds[0])
      return false;
  }
  return true;
}

}  // namespace

void pattern_sweep(const ModelSpec& spec, const ParameterSet& ps,
                   const std::function<void(const SweepRow&)>& visit,
                   const SweepOptions& opt) {
  if (spec.factor_count() != 1)
    throw SpecError("pattern sweep needs a one-factor model");
  if (!spec.homogeneous_categories())
    throw SpecError("pattern sweep needs equal category counts");
  validate_parameters(ps, spec);
  const int p = spec.item_count();
  const int K = spec.categories(0);
  const double total = std::pow(static_cast<double>(K), p);
  if (total > opt.cap)
    throw SpecError("pattern sweep would enumerate " + shortest(total) +
                    " patterns, above the cap of " + shortest(opt.cap) +
                    "; score a random sample of patterns instead");

  const bool cache = interchangeable_items(spec, ps);
  std::map<std::vector<int>, SweepRow> memo;

  auto score = [&](const std::vector<int>& pattern) {
    SweepRow r;
    Eigen::VectorXi row(p);
    for (int j = 0; j < p; ++j) row(j) = pattern[static_cast<std::size_t>(j)];
    r.average = observed_average(row);
    r.map = map_score(ps, spec, row, opt.score)(0);
    auto ml = ml_score(ps, spec, row, opt.score);
    r.ml = ml.eta(0);
    r.ml_diverged = ml.diverged;
    r.ml_direction = ml.direction(0);
    LatentState at(1);
    at(0) = r.average;
    r.gradient_at_average = conditional_loglik_gradient(ps, spec, row, at)(0);
    return r;
  };

  std::vector<int> pattern(static_cast<std::size_t>(p), 1);
  while (true) {
    SweepRow r;
    if (cache) {
      std::vector<int> key = pattern;
      std::sort(key.begin(), key.end());
      auto it = memo.find(key);
      if (it == memo.end()) it = memo.emplace(key, score(key)).first;
      r = it->second;
    } else {
      r = score(pattern);
    }
    r.pattern = pattern;
    r.extreme = std::any_of(pattern.begin(), pattern.end(),
                            [&](int c) { return c == 1 || c == K; });
    visit(r);

    int j = p - 1;
    while (j >= 0 && pattern[static_cast<std::size_t>(j)] == K) {
      pattern[static_cast<std::size_t>(j)] = 1;
      --j;
    }
    if (j < 0) break;
    ++pattern[static_cast<std::size_t>(j)];
  }
}

std::vector<SweepRow> pattern_sweep(const ModelSpec& spec, const ParameterSet& ps,
                                    const SweepOptions& opt) {
  std::vector<SweepRow> rows;
  pattern_sweep(spec, ps, [&](const SweepRow& r) { rows.push_back(r); }, opt);
  return rows;
}

double expected_average(const ParameterSet& ps, const ModelSpec& spec,
                        const LatentState& eta) {
  double sum = 0.0;
  for (int j = 0; j < spec.item_count(); ++j)
    for (int k = 1; k <= spec.categories(j); ++k)
      sum += k * category_prob(ps, spec, j, k, eta);
  return sum / spec.item_count();
}

std::vector<double> expected_average_curve(const ParameterSet& ps,
                                           const ModelSpec& spec,
                                           const std::vector<double>& etas) {
  std::vector<double> out;
  out.reserve(etas.size());
  for (double e : etas) {
    if (!std::isfinite(e)) throw DomainError("latent grid value is not finite");
    LatentState eta = LatentState::Constant(spec.factor_count(), e);
    out.push_back(expected_average(ps, spec, eta));
  }
  return out;
}

void write_sweep_header(std::ostream& out) {
  out << "p,pattern,average,map,ml,ml_flag,extreme,gradient_at_average\n";
}

void write_sweep_row(std::ostream& out, const SweepRow& r) {
  const bool compact = std::all_of(r.pattern.begin(), r.pattern.end(),
                                   [](int c) { return c < 10; });
  std::string pat;
  for (std::size_t i = 0; i < r.pattern.size(); ++i) {
    if (!compact && i > 0) pat += '-';
    pat += std::to_string(r.pattern[i]);
  }
  const char* flag = r.ml_direction > 0 ? "+" : (r.ml_direction < 0 ? "-" : "");
  out << r.pattern.size() << ',' << pat << ',' << shortest(r.average) << ','
      << shortest(r.map) << ',';
  if (r.ml_diverged)
    out << ',';
  else
    out << shortest(r.ml) << ',';
  out << flag << ',' << (r.extreme ? 1 : 0) << ','
      << shortest(r.gradient_at_average) << '\n';
}

void write_curve_csv(std::ostream& out, const std::vector<double>& etas,
                     const std::vector<double>& values) {
  if (etas.size() != values.size())
    throw SpecError("curve grid and values differ in length");
  out << "eta,expected_average\n";
  for (std::size_t i = 0; i < etas.size(); ++i)
    out << shortest(etas[i]) << ',' << shortest(values[i]) << '\n';
}

}  // namespace ordcfa
