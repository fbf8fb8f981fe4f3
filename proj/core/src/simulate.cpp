#include "ordcfa/simulate.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "ordcfa/errors.hpp"
#include "ordcfa/quadrature.hpp"
#include "ordcfa/version.hpp"

namespace ordcfa {

std::string to_string(ResponseDistribution d) {
  switch (d) {
    case ResponseDistribution::Symmetric: return "symmetric";
    case ResponseDistribution::Skewed: return "skewed";
    case ResponseDistribution::Middling: return "middling";
  }
  return "symmetric";
}

ResponseDistribution parse_response_distribution(std::string_view name) {
  if (name == "symmetric") return ResponseDistribution::Symmetric;
  if (name == "skewed") return ResponseDistribution::Skewed;
  if (name == "middling") return ResponseDistribution::Middling;
  throw SpecError("unknown response distribution '" + std::string(name) +
                  "' (expected symmetric, skewed or middling)");
}

Eigen::VectorXd category_probabilities(ResponseDistribution d, int K) {
  if (K < 2) throw DomainError("an item needs at least two categories");
  Eigen::VectorXd pr(K);
  switch (d) {
    case ResponseDistribution::Symmetric:
      pr.setConstant(1.0 / K);
      break;
    case ResponseDistribution::Skewed:
      if (K < 3) throw DomainError("skewed responses need at least three categories");
      pr.setConstant(0.90 / (K - 2));
      pr(K - 1) = 0.04;
      pr(K - 2) = 0.06;
      break;
    case ResponseDistribution::Middling:
      if (K < 3) throw DomainError("middling responses need at least three categories");
      pr.setConstant(0.90 / (K - 2));
      pr(0) = 0.05;
      pr(K - 1) = 0.05;
      break;
  }
  return pr;
}

int sparse_item_count(double prop_sparse, int n) {
  if (!(prop_sparse >= 0.0 && prop_sparse <= 1.0))
    throw DomainError("sparse proportion must lie in [0, 1]");
  return static_cast<int>(std::ceil(prop_sparse * n - 1e-9));
}

ModelSpec population_spec(const PopulationCondition& c) {
  if (c.factors < 1 || c.indicators_per_factor < 1)
    throw SpecError("population needs at least one factor and one indicator");
  return clustered_spec(std::vector<int>(static_cast<std::size_t>(c.factors),
                                         c.indicators_per_factor),
                        c.categories);
}

ParameterSet make_population(const PopulationCondition& c) {
  if (!(std::abs(c.loading) < 1.0))
    throw DomainError("standardized loading must lie in (-1, 1)");
  const ModelSpec spec = population_spec(c);
  ParameterSet ps = ParameterSet::defaults(spec);
  const int m = c.factors;
  ps.phi = Eigen::MatrixXd::Constant(m, m, c.factor_correlation);
  ps.phi.diagonal().setOnes();
  ps.kappa.setZero();
  ps.nu.setZero();
  const Eigen::VectorXd sym = category_probabilities(ResponseDistribution::Symmetric, c.categories);
  const Eigen::VectorXd sparse = category_probabilities(c.distribution, c.categories);
  const int n_sparse = sparse_item_count(c.prop_sparse, c.indicators_per_factor);
  for (int q = 0; q < m; ++q) {
    const auto& members = spec.items_of(q);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const int j = members[i];
      ps.lambda(j, q) = c.loading;
      ps.theta(j) = 1.0 - c.loading * c.loading;
      const Eigen::VectorXd& pr = static_cast<int>(i) < n_sparse ? sparse : sym;
      double cum = 0.0;
      for (int k = 0; k + 1 < c.categories; ++k) {
        cum += pr(k);
        ps.thresholds[j](k) = normal_quantile(cum);
      }
    }
  }
  validate_parameters(ps, spec);
  return ps;
}

ResponseMatrix generate_dataset(const ModelSpec& spec, const ParameterSet& pop,
                                int n, std::uint64_t seed) {
  validate_parameters(pop, spec);
  if (n < 1) throw SpecError("sample size must be positive");
  const int p = spec.item_count();
  const int m = spec.factor_count();
  Eigen::LLT<Eigen::MatrixXd> llt(pop.phi);
  const Eigen::MatrixXd L = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::MatrixXi y(n, p);
  Eigen::VectorXd z(m);
  for (int i = 0; i < n; ++i) {
    for (int q = 0; q < m; ++q) z(q) = norm(rng);
    const Eigen::VectorXd eta = pop.kappa + L * z;
    for (int j = 0; j < p; ++j) {
      const double ystar = pop.nu(j) + pop.lambda(j, spec.factor_of(j)) * eta(spec.factor_of(j)) +
                           std::sqrt(pop.theta(j)) * norm(rng);
      const auto& t = pop.thresholds[j];
      int k = 1;
      while (k <= t.size() && ystar > t(k - 1)) ++k;
      y(i, j) = k;
    }
  }
  return make_responses(std::move(y), spec);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t cell,
                          std::uint64_t rep) {
  return splitmix64(splitmix64(splitmix64(master) ^ cell) ^ rep);
}

StudyLog run_study(const StudyConfig& cfg,
                   const std::function<void(int, int)>& progress) {
  if (cfg.reps < 1) throw SpecError("a study needs at least one replication");
  if (cfg.cells.empty()) throw SpecError("a study needs at least one cell");
  const int R = static_cast<int>(cfg.regimes.size());
  const int S = static_cast<int>(cfg.starts.size());
  const int C = static_cast<int>(cfg.cells.size());
  const int per_rep = R * S;

  std::vector<ModelSpec> specs;
  std::vector<ParameterSet> pops;
  std::vector<QuadratureGrid> grids;
  for (const auto& cell : cfg.cells) {
    specs.push_back(population_spec(cell.condition));
    pops.push_back(make_population(cell.condition));
    const int dim = cell.condition.factors;
    grids.push_back(cfg.nodes > 0 ? make_grid(GridKind::GaussHermite, cfg.nodes, dim)
                                  : default_grid(dim));
  }

  StudyLog log;
  log.config = cfg;
  const int total = C * cfg.reps;
  log.records.resize(static_cast<std::size_t>(total * per_rep));

  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  auto work = [&] {
    for (int task = next++; task < total; task = next++) {
      const int c = task / cfg.reps;
      const int rep = task % cfg.reps;
      const ModelSpec& spec = specs[static_cast<std::size_t>(c)];
      ResponseMatrix data = generate_dataset(
          spec, pops[static_cast<std::size_t>(c)], cfg.sample_size,
          stream_seed(cfg.seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(rep)));
      for (int s = 0; s < S; ++s) {
        for (int r = 0; r < R; ++r) {
          FitRecord& rec = log.records[static_cast<std::size_t>(task * per_rep + s * R + r)];
          rec.cell = c;
          rec.rep = rep;
          rec.regime = cfg.regimes[static_cast<std::size_t>(r)];
          rec.start = cfg.starts[static_cast<std::size_t>(s)];
          try {
            auto cs = make_constraints(spec, rec.regime);
            auto sv = starting_values(spec, data, cs, rec.start);
            auto fit = fit_mml(spec, data, cs, sv, grids[static_cast<std::size_t>(c)], cfg.fit);
            rec.converged = fit.converged;
            rec.admissible = fit.admissible;
            rec.loglik = fit.loglik;
            rec.deviance = -2.0 * fit.loglik;
            rec.iterations = fit.iterations;
            rec.message = fit.message;
          } catch (const std::exception& e) {
            rec.converged = false;
            rec.admissible = false;
            rec.message = e.what();
          }
        }
      }
      const int d = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(d, total);
      }
    }
  };
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(total));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return log;
}

double rounded_deviance(double deviance) {
  return std::round(deviance * 1000.0) / 1000.0;
}

std::string to_string(FitBucket b) {
  switch (b) {
    case FitBucket::All: return "All";
    case FitBucket::RI: return "RI";
    case FitBucket::UV: return "UV";
    case FitBucket::I: return "I";
    case FitBucket::RI_UV: return "RI&UV";
    case FitBucket::RI_I: return "RI&I";
    case FitBucket::UV_I: return "UV&I";
    case FitBucket::NotComparable: return "NotComparable";
  }
  return "NotComparable";
}

FitBucket attribute_best_fit(double uv, double ri, double i, bool comparable) {
  if (!comparable) return FitBucket::NotComparable;
  uv = rounded_deviance(uv);
  ri = rounded_deviance(ri);
  i = rounded_deviance(i);
  const double best = std::min({uv, ri, i});
  const bool b_uv = uv == best, b_ri = ri == best, b_i = i == best;
  if (b_uv && b_ri && b_i) return FitBucket::All;
  if (b_ri && b_uv) return FitBucket::RI_UV;
  if (b_ri && b_i) return FitBucket::RI_I;
  if (b_uv && b_i) return FitBucket::UV_I;
  if (b_ri) return FitBucket::RI;
  if (b_uv) return FitBucket::UV;
  return FitBucket::I;
}

namespace {

int regime_slot(const std::vector<Regime>& regimes, bool (*match)(Regime)) {
  for (std::size_t r = 0; r < regimes.size(); ++r)
    if (match(regimes[r])) return static_cast<int>(r);
  return -1;
}

}  // namespace

StudySummary summarize(const StudyLog& log) {
  const auto& cfg = log.config;
  const int R = static_cast<int>(cfg.regimes.size());
  const int S = static_cast<int>(cfg.starts.size());
  const int per_rep = R * S;
  const int uv = regime_slot(cfg.regimes, [](Regime r) {
    return r == Regime::Traditional || r == Regime::UnitVariance;
  });
  const int ri = regime_slot(cfg.regimes, [](Regime r) { return r == Regime::ReferenceIndicator; });
  const int in = regime_slot(cfg.regimes, [](Regime r) { return r == Regime::Integer; });

  StudySummary out;
  for (std::size_t c = 0; c < cfg.cells.size(); ++c) {
    for (int s = 0; s < S; ++s) {
      CellSummary cs;
      cs.cell = static_cast<int>(c);
      cs.name = cfg.cells[c].name;
      cs.start = cfg.starts[static_cast<std::size_t>(s)];
      cs.rates.assign(static_cast<std::size_t>(R), RegimeRates{});
      for (int rep = 0; rep < cfg.reps; ++rep) {
        const std::size_t base =
            (c * static_cast<std::size_t>(cfg.reps) + static_cast<std::size_t>(rep)) * per_rep +
            static_cast<std::size_t>(s * R);
        if (base + R > log.records.size())
          throw SpecError("study log is incomplete");
        bool all_ok = true;
        for (int r = 0; r < R; ++r) {
          const FitRecord& f = log.records[base + r];
          auto& rr = cs.rates[static_cast<std::size_t>(r)];
          ++rr.reps;
          rr.converged += f.converged;
          rr.admissible += f.admissible;
          rr.converged_admissible += f.converged && f.admissible;
          all_ok = all_ok && f.converged && f.admissible;
        }
        if (all_ok) {
          ++cs.comparable;
          double lo = log.records[base].deviance, hi = lo;
          double rlo = rounded_deviance(lo), rhi = rlo;
          for (int r = 1; r < R; ++r) {
            const double d = log.records[base + r].deviance;
            lo = std::min(lo, d);
            hi = std::max(hi, d);
            rlo = std::min(rlo, rounded_deviance(d));
            rhi = std::max(rhi, rounded_deviance(d));
          }
          cs.identical += rlo == rhi;
          cs.fit_inequalities += hi - lo >= 1e-4;
        }
        FitBucket b = FitBucket::NotComparable;
        if (uv >= 0 && ri >= 0 && in >= 0)
          b = attribute_best_fit(log.records[base + uv].deviance,
                                 log.records[base + ri].deviance,
                                 log.records[base + in].deviance, all_ok);
        ++cs.buckets[static_cast<std::size_t>(b)];
      }
      out.cells.push_back(std::move(cs));
    }
  }
  return out;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw SpecError("cannot write " + p.string());
  return out;
}

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

}  // namespace

void write_study_outputs(const StudyLog& log, const StudySummary& summary,
                         const std::filesystem::path& dir,
                         const std::vector<std::pair<std::string, std::string>>& inputs) {
  std::filesystem::create_directories(dir);
  const auto& cfg = log.config;
  {
    auto out = open_out(dir / "rates.csv");
    out << "cell,start,regime,reps,converged,admissible,converged_admissible,"
           "convergence_rate,admissible_rate,converged_admissible_rate\n";
    for (const auto& cs : summary.cells)
      for (std::size_t r = 0; r < cs.rates.size(); ++r) {
        const auto& rr = cs.rates[r];
        out << csv_field(cs.name) << ',' << to_string(cs.start) << ','
            << to_string(cfg.regimes[r]) << ',' << rr.reps << ',' << rr.converged << ','
            << rr.admissible << ',' << rr.converged_admissible << ','
            << fixed(rr.convergence_rate(), 4) << ',' << fixed(rr.admissible_rate(), 4) << ','
            << fixed(rr.converged_admissible_rate(), 4) << '\n';
      }
  }
  {
    auto out = open_out(dir / "identical_fit.csv");
    out << "cell,start,comparable,identical,identical_rate,fit_inequalities\n";
    for (const auto& cs : summary.cells)
      out << csv_field(cs.name) << ',' << to_string(cs.start) << ',' << cs.comparable << ','
          << cs.identical << ',' << fixed(cs.identical_rate(), 4) << ','
          << cs.fit_inequalities << '\n';
  }
  {
    auto out = open_out(dir / "best_fit.csv");
    out << "cell,start";
    for (int b = 0; b < kFitBucketCount; ++b) out << ',' << to_string(static_cast<FitBucket>(b));
    out << '\n';
    for (const auto& cs : summary.cells) {
      out << csv_field(cs.name) << ',' << to_string(cs.start);
      for (int v : cs.buckets) out << ',' << v;
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "replications.csv");
    out << "cell,rep,start,regime,converged,admissible,loglik,deviance,iterations,message\n";
    for (const auto& f : log.records)
      out << csv_field(cfg.cells[static_cast<std::size_t>(f.cell)].name) << ',' << f.rep << ','
          << to_string(f.start) << ',' << to_string(f.regime) << ',' << (f.converged ? 1 : 0)
          << ',' << (f.admissible ? 1 : 0) << ',' << fixed(f.loglik, 6) << ','
          << fixed(f.deviance, 6) << ',' << f.iterations << ',' << csv_field(f.message)
          << '\n';
  }
  nlohmann::ordered_json m;
  m["tool"] = "ordcfa";
  m["version"] = kVersion;
  m["estimator"] = "marginal maximum likelihood (probit, Gauss-Hermite)";
  m["seed"] = cfg.seed;
  m["reps"] = cfg.reps;
  m["sample_size"] = cfg.sample_size;
  m["nodes"] = cfg.nodes;
  nlohmann::ordered_json regimes = nlohmann::ordered_json::array();
  for (auto r : cfg.regimes) regimes.push_back(to_string(r));
  m["regimes"] = regimes;
  nlohmann::ordered_json starts = nlohmann::ordered_json::array();
  for (auto s : cfg.starts) starts.push_back(to_string(s));
  m["starts"] = starts;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : cfg.cells) {
    nlohmann::ordered_json j;
    j["name"] = c.name;
    j["indicators_per_factor"] = c.condition.indicators_per_factor;
    j["loading"] = c.condition.loading;
    j["categories"] = c.condition.categories;
    j["distribution"] = to_string(c.condition.distribution);
    j["prop_sparse"] = c.condition.prop_sparse;
    j["factors"] = c.condition.factors;
    j["factor_correlation"] = c.condition.factor_correlation;
    cells.push_back(j);
  }
  m["cells"] = cells;
  m["fits"] = log.records.size();
  m["fits_breakdown"] = {{"cells", cfg.cells.size()},
                         {"reps", cfg.reps},
                         {"regimes", cfg.regimes.size()},
                         {"starts", cfg.starts.size()}};
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& [name, digest] : inputs) in[name] = digest;
  m["inputs"] = in;
  m["outputs"] = {"rates.csv", "identical_fit.csv", "best_fit.csv", "replications.csv"};
  auto out = open_out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

}  // namespace ordcfa
