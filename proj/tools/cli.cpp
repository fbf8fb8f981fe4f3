#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ordcfa/errors.hpp"
#include "ordcfa/estimate.hpp"
#include "ordcfa/identification.hpp"
#include "ordcfa/io.hpp"
#include "ordcfa/quadrature.hpp"
#include "ordcfa/score.hpp"
#include "ordcfa/simulate.hpp"
#include "ordcfa/transform.hpp"
#include "ordcfa/version.hpp"

namespace ordcfa {

namespace {

using json = nlohmann::ordered_json;

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::filesystem::path sidecar(const std::filesystem::path& out, const std::string& suffix) {
  std::filesystem::path p = out;
  p.replace_extension();
  return p.string() + suffix;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpecError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_manifest(const std::filesystem::path& out, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const json& options) {
  json m;
  m["tool"] = "ordcfa";
  m["version"] = kVersion;
  m["command"] = command;
  json in = json::object();
  for (const auto& [name, path] : inputs)
    in[name] = {{"path", path}, {"digest", file_digest(path)}};
  m["inputs"] = in;
  m["options"] = options;
  m["output"] = out.filename().string();
  write_json(sidecar(out, ".manifest.json"), m);
}

QuadratureGrid grid_for(int dimension, int nodes, const std::string& kind) {
  const GridKind k = parse_grid_kind(kind);
  const int n = nodes > 0 ? nodes : default_node_count(dimension);
  return make_grid(k, n, dimension);
}

void print_params(std::ostream& os, const ParameterSet& ps, const ModelSpec& spec) {
  os << "item        factor      nu        lambda    theta     thresholds\n";
  for (int j = 0; j < spec.item_count(); ++j) {
    char line[256];
    std::snprintf(line, sizeof line, "%-11s %-11s %-9s %-9s %-9s", spec.item(j).name.c_str(),
                  spec.factor_name(spec.factor_of(j)).c_str(), num(ps.nu(j)).c_str(),
                  num(ps.item_loading(spec, j)).c_str(), num(ps.theta(j)).c_str());
    os << line;
    for (Eigen::Index k = 0; k < ps.thresholds[static_cast<std::size_t>(j)].size(); ++k)
      os << ' ' << num(ps.thresholds[static_cast<std::size_t>(j)](k));
    os << '\n';
  }
  for (int q = 0; q < spec.factor_count(); ++q) {
    os << "factor " << spec.factor_name(q) << ": kappa " << num(ps.kappa(q)) << ", phi";
    for (int r = 0; r < spec.factor_count(); ++r) os << ' ' << num(ps.phi(q, r));
    os << '\n';
  }
}

struct FitArgs {
  std::string data, model, constraints = "integer", start = "default", out, grid = "gh";
  int nodes = 0, max_iter = 500;
  bool recode = false, polish = false, binary_rule = false, experimental = false;
};

int cmd_fit(const FitArgs& a) {
  CsvOptions copt;
  copt.recode = a.recode;
  const LoadedData d = load_data(a.data, a.model, copt);
  ConstraintOptions co;
  co.binary_rule = a.binary_rule;
  co.allow_experimental = a.experimental;
  const Regime regime = parse_regime(a.constraints);
  const ConstraintSet cs = make_constraints(d.spec, regime, co);
  for (const auto& w : cs.warnings) std::cerr << "warning: " << w << '\n';
  const QuadratureGrid grid = grid_for(d.spec.factor_count(), a.nodes, a.grid);
  const StartValues sv = starting_values(d.spec, d.responses, cs, parse_start_regime(a.start));
  FitOptions fo;
  fo.max_iterations = a.max_iter;
  fo.polish = a.polish;
  const FitResult fit = fit_mml(d.spec, d.responses, cs, sv, grid, fo);
  const FitStatistics st = fit_statistics(fit);

  json report;
  report["loglik"] = fit.loglik;
  report["deviance"] = st.deviance;
  report["aic"] = st.aic;
  report["bic"] = st.bic;
  report["free_parameters"] = st.free_parameters;
  report["respondents"] = fit.respondents;
  report["rows_read"] = d.rows_read;
  report["rows_dropped"] = d.rows_dropped;
  report["converged"] = fit.converged;
  report["admissible"] = fit.admissible;
  report["admissibility_reasons"] = fit.admissibility_reasons;
  report["iterations"] = fit.iterations;
  report["gradient_norm"] = fit.gradient_norm;
  report["constraint_residual"] = fit.constraint_residual;
  report["message"] = fit.message;
  report["warnings"] = fit.warnings;
  report["start"] = a.start;
  report["grid"] = {{"kind", to_string(grid.kind)}, {"nodes", grid.node_count()}};

  json opts{{"constraints", a.constraints}, {"start", a.start}, {"nodes", grid.node_count()},
            {"grid", a.grid}, {"recode", a.recode}, {"polish", a.polish},
            {"binary_rule", a.binary_rule}, {"max_iter", a.max_iter}};
  if (!a.out.empty()) {
    write_params(a.out, fit.params, d.spec, regime, json{{"fit", report}});
    write_manifest(a.out, "fit", {{"data", a.data}, {"model", a.model}}, opts);
  }

  std::cout << "regime " << to_string(regime) << ", " << fit.respondents << " respondents";
  if (d.rows_dropped > 0) std::cout << " (" << d.rows_dropped << " rows with missing values removed)";
  std::cout << "\nloglik " << num(fit.loglik, 6) << "  deviance " << num(st.deviance, 3)
            << "  AIC " << num(st.aic, 3) << "  BIC " << num(st.bic, 3) << "  free "
            << st.free_parameters << '\n';
  std::cout << "converged " << (fit.converged ? "yes" : "no") << " after " << fit.iterations
            << " iterations (gradient " << fit.gradient_norm << "), admissible "
            << (fit.admissible ? "yes" : "no") << '\n';
  for (const auto& r : fit.admissibility_reasons) std::cout << "  inadmissible: " << r << '\n';
  print_params(std::cout, fit.params, d.spec);
  if (!fit.converged) {
    std::cerr << "error: estimation did not converge: " << fit.message << '\n';
    return kExitNonconvergence;
  }
  return kExitOk;
}

struct TransformArgs {
  std::string params, to, out, audit;
  bool binary_rule = false, experimental = false;
};

int cmd_transform(const TransformArgs& a) {
  const ParamsFile pf = read_params(a.params);
  ConstraintOptions co;
  co.binary_rule = a.binary_rule;
  co.allow_experimental = a.experimental;
  const Regime target = parse_regime(a.to);
  const ConstraintSet to_cs = make_constraints(pf.spec, target, co);
  const ConstraintSet from_cs = make_constraints(pf.spec, pf.regime, co);
  const double source_violation = max_constraint_violation(from_cs, pf.params, pf.spec);
  if (source_violation > 1e-6)
    throw SpecError("input parameters violate their own " + to_string(pf.regime) +
                    " constraints by " + std::to_string(source_violation));
  const TransformResult res = convert(pf.params, pf.spec, to_cs);
  const TransformResult back = convert(res.params, pf.spec, from_cs);
  const double roundtrip = max_abs_difference(back.params, pf.params, pf.spec);

  json audit;
  audit["from"] = to_string(pf.regime);
  audit["to"] = to_string(target);
  audit["transform"] = transform_to_json(res.transform);
  audit["residual"] = res.residual;
  audit["roundtrip_max_deviation"] = roundtrip;
  if (!a.out.empty()) {
    write_params(a.out, res.params, pf.spec, target, json{{"transform", audit}});
    const std::filesystem::path audit_path =
        a.audit.empty() ? sidecar(a.out, ".transform.json") : std::filesystem::path(a.audit);
    write_json(audit_path, audit);
    write_manifest(a.out, "transform", {{"params", a.params}}, json{{"to", a.to}});
  }
  std::cout << to_string(pf.regime) << " -> " << to_string(target) << '\n';
  std::cout << "target constraint residual " << res.residual << '\n';
  std::cout << "round-trip max deviation " << roundtrip << '\n';
  print_params(std::cout, res.params, pf.spec);
  return kExitOk;
}

struct ScoreArgs {
  std::string data, params, method = "map", out;
  bool recode = false;
  unsigned threads = 0;
};

int cmd_score(const ScoreArgs& a) {
  const ParamsFile pf = read_params(a.params);
  CsvOptions copt;
  copt.recode = a.recode;
  int dropped = 0;
  const ResponseMatrix data = load_responses(a.data, pf.spec, copt, &dropped);
  const ScoreMethod method = parse_score_method(a.method);
  const auto scores = score_rows(pf.params, pf.spec, data, method, {}, a.threads);
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw SpecError("cannot write " + a.out);
    write_scores_csv(out, scores, pf.spec);
    write_manifest(a.out, "score", {{"data", a.data}, {"params", a.params}},
                   json{{"method", a.method}, {"recode", a.recode}});
  } else {
    write_scores_csv(std::cout, scores, pf.spec);
  }
  int diverged = 0;
  for (const auto& s : scores) diverged += s.diverged;
  std::cerr << scores.size() << " rows scored by " << a.method;
  if (dropped > 0) std::cerr << " (" << dropped << " rows with missing values removed)";
  if (method == ScoreMethod::Ml) std::cerr << ", " << diverged << " without a finite estimate";
  if (pf.spec.factor_count() == 1 && scores.size() > 1) {
    double ma = 0, me = 0;
    for (const auto& s : scores) {
      ma += s.average;
      me += s.eta(0);
    }
    ma /= scores.size();
    me /= scores.size();
    double sab = 0, saa = 0, sbb = 0;
    for (const auto& s : scores) {
      sab += (s.average - ma) * (s.eta(0) - me);
      saa += (s.average - ma) * (s.average - ma);
      sbb += (s.eta(0) - me) * (s.eta(0) - me);
    }
    if (saa > 0 && sbb > 0)
      std::cerr << ", correlation(average, score) " << num(sab / std::sqrt(saa * sbb));
  }
  std::cerr << '\n';
  return kExitOk;
}

std::pair<int, int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  int lo = 0, hi = 0;
  try {
    if (dots == std::string::npos) {
      lo = hi = std::stoi(s);
    } else {
      lo = std::stoi(s.substr(0, dots));
      hi = std::stoi(s.substr(dots + 2));
    }
  } catch (const std::exception&) {
    throw SpecError("bad range '" + s + "' (expected N or A..B)");
  }
  if (lo < 1 || hi < lo) throw SpecError("bad range '" + s + "'");
  return {lo, hi};
}

struct SweepArgs {
  std::string p = "2..10", out;
  int K = 5;
  double cap = 1e7;
  double variance = 0.0;
};

int cmd_sweep(const SweepArgs& a) {
  const auto [lo, hi] = parse_range(a.p);
  for (int p = lo; p <= hi; ++p)
    if (std::pow(static_cast<double>(a.K), p) > a.cap)
      throw SpecError("p=" + std::to_string(p) + ", K=" + std::to_string(a.K) +
                      " exceeds the pattern cap; lower --p or raise --cap");
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::binary);
    if (!file) throw SpecError("cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  write_sweep_header(out);
  SweepOptions so;
  so.cap = a.cap;
  for (int p = lo; p <= hi; ++p) {
    const ModelSpec spec = single_factor_spec(p, a.K);
    const ParameterSet ps =
        sumscore_params(spec, a.variance > 0 ? std::optional<double>(a.variance) : std::nullopt);
    long long rows = 0;
    double band = 0.0, grad = 0.0;
    pattern_sweep(spec, ps, [&](const SweepRow& r) {
      write_sweep_row(out, r);
      ++rows;
      if (!r.extreme) {
        band = std::max(band, std::abs(r.map - r.average));
        grad = std::max(grad, std::abs(r.gradient_at_average));
      }
    }, so);
    std::cerr << "p=" << p << ": " << rows << " patterns, non-extreme max |MAP-average| "
              << num(band) << ", max |gradient at average| " << grad << '\n';
  }
  if (!a.out.empty())
    write_manifest(a.out, "sweep", {}, json{{"p", a.p}, {"K", a.K}, {"cap", a.cap},
                                            {"variance", a.variance}});
  return kExitOk;
}

struct CurveArgs {
  std::string params, out;
  double from = -3.0, to = 9.0;
  int points = 601;
};

int cmd_curve(const CurveArgs& a) {
  const ParamsFile pf = read_params(a.params);
  if (pf.spec.factor_count() != 1) throw SpecError("expected-average curves need one factor");
  if (a.points < 2 || !(a.to > a.from)) throw SpecError("bad curve grid");
  std::vector<double> etas;
  for (int i = 0; i < a.points; ++i)
    etas.push_back(a.from + (a.to - a.from) * i / (a.points - 1));
  const auto values = expected_average_curve(pf.params, pf.spec, etas);
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::binary);
    if (!file) throw SpecError("cannot write " + a.out);
  }
  write_curve_csv(a.out.empty() ? std::cout : file, etas, values);
  if (!a.out.empty())
    write_manifest(a.out, "curve", {{"params", a.params}},
                   json{{"from", a.from}, {"to", a.to}, {"points", a.points}});
  return kExitOk;
}

struct SimulateArgs {
  std::string config, out;
  int reps = 0, nodes = -1;
  long long seed = -1;
  int threads = -1;
};

int cmd_simulate(const SimulateArgs& a) {
  StudyConfig cfg = read_study_config(a.config);
  if (a.reps > 0) cfg.reps = a.reps;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (a.nodes >= 0) cfg.nodes = a.nodes;
  if (a.threads >= 0) cfg.threads = static_cast<unsigned>(a.threads);
  const StudyLog log = run_study(cfg, [](int done, int total) {
    std::cerr << "\rreplication " << done << "/" << total << std::flush;
  });
  std::cerr << '\n';
  const StudySummary summary = summarize(log);
  if (a.out.empty()) throw SpecError("simulate needs --out");
  write_study_outputs(log, summary, a.out, {{"config", file_digest(a.config)}});
  int failures = 0;
  for (const auto& r : log.records) failures += !r.converged;
  std::cout << "cell            start    regime               conv    adm     conv&adm\n";
  for (const auto& cs : summary.cells)
    for (std::size_t r = 0; r < cs.rates.size(); ++r) {
      char line[256];
      std::snprintf(line, sizeof line, "%-15s %-8s %-20s %-7s %-7s %s\n", cs.name.c_str(),
                    to_string(cs.start).c_str(), to_string(cfg.regimes[r]).c_str(),
                    num(cs.rates[r].convergence_rate(), 3).c_str(),
                    num(cs.rates[r].admissible_rate(), 3).c_str(),
                    num(cs.rates[r].converged_admissible_rate(), 3).c_str());
      std::cout << line;
    }
  std::cout << log.records.size() << " fits (" << cfg.cells.size() << " cells x " << cfg.reps
            << " reps x " << cfg.regimes.size() << " regimes x " << cfg.starts.size()
            << " starts), " << failures << " not converged; tables in " << a.out << '\n';
  return kExitOk;
}

struct SumscoreArgs {
  std::string data, model, out;
  int nodes = 0;
  bool recode = false;
};

int cmd_sumscore_test(const SumscoreArgs& a) {
  CsvOptions copt;
  copt.recode = a.recode;
  const LoadedData d = load_data(a.data, a.model, copt);
  const QuadratureGrid grid = grid_for(d.spec.factor_count(), a.nodes, "gh");
  const LikelihoodRatioTest lr = sumscore_lr_test(d.spec, d.responses, grid);
  json j;
  j["statistic"] = lr.statistic;
  j["df"] = lr.df;
  j["p_value"] = lr.p_value;
  j["integer"] = {{"loglik", lr.full.loglik}, {"free_parameters", lr.full.free_parameters}};
  j["sumscore"] = {{"loglik", lr.restricted.loglik},
                   {"free_parameters", lr.restricted.free_parameters}};
  j["respondents"] = lr.full.respondents;
  if (!a.out.empty()) {
    write_json(a.out, j);
    write_manifest(a.out, "sumscore-test", {{"data", a.data}, {"model", a.model}},
                   json{{"nodes", grid.node_count()}});
  }
  std::cout << "integer model loglik " << num(lr.full.loglik, 4) << " ("
            << lr.full.free_parameters << " free)\n"
            << "sum-score model loglik " << num(lr.restricted.loglik, 4) << " ("
            << lr.restricted.free_parameters << " free)\n"
            << "LR statistic " << num(lr.statistic, 4) << " on " << lr.df << " df, p = "
            << lr.p_value << '\n';
  return kExitOk;
}

struct IdentifyArgs {
  std::string model, constraints = "integer";
  int K = 0;
  bool binary_rule = false, experimental = false;
  long long seed = 20240611;
};

int cmd_identify(const IdentifyArgs& a) {
  const ModelDescription desc = read_model_description(a.model);
  std::vector<ItemInfo> items;
  std::vector<FactorPattern> pattern;
  for (const auto& f : desc.factors) {
    FactorPattern fp{f.name, {}};
    for (const auto& it : f.items) {
      const int K = it.categories > 0 ? it.categories : a.K;
      if (K < 2)
        throw SpecError("item '" + it.name + "' has no category count; add item=K or --K");
      items.push_back({it.name, K});
      fp.items.push_back(it.name);
    }
    pattern.push_back(std::move(fp));
  }
  const ModelSpec spec = build_model_spec(std::move(items), std::move(pattern));
  ConstraintOptions co;
  co.binary_rule = a.binary_rule;
  co.allow_experimental = a.experimental;
  const ConstraintSet cs = make_constraints(spec, parse_regime(a.constraints), co);
  IdentificationOptions io;
  io.seed = static_cast<std::uint64_t>(a.seed);
  const auto rep = verify_identification(spec, cs, io);
  std::cout << to_string(cs.regime) << ": " << to_string(rep.verdict) << '\n'
            << "constraints " << rep.constraint_count << " (minimal count "
            << rep.minimal_count << ")\n"
            << "constraint Jacobian rank " << rep.jacobian_rank << " of "
            << rep.transform_dimension << '\n'
            << rep.detail << '\n';
  return rep.verdict == IdentificationVerdict::Inconclusive ? kExitNonconvergence : kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Ordinal factor models under interchangeable identification constraints"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Marginal ML estimation under a constraint regime");
  f->add_option("data", fit.data, "CSV with a header row")->required()->check(CLI::ExistingFile);
  f->add_option("model", fit.model, "Model description file")->required()->check(CLI::ExistingFile);
  f->add_option("--constraints", fit.constraints, "traditional, unit-variance, "
                "reference-indicator, delta, integer, sumscore-rasch, geometric-mean")
      ->capture_default_str();
  f->add_option("--start", fit.start, "simple or default")->capture_default_str();
  f->add_option("--nodes", fit.nodes, "Quadrature nodes per factor (0 = 61/31/15 by dimension)");
  f->add_option("--grid", fit.grid, "gh or rectangular")->capture_default_str();
  f->add_option("--max-iter", fit.max_iter)->capture_default_str();
  f->add_option("--out", fit.out, "Parameter file to write");
  f->add_flag("--recode", fit.recode, "Map each column's ordered labels to 1..L");
  f->add_flag("--polish", fit.polish, "Newton refinement after quasi-Newton");
  f->add_flag("--binary-rule", fit.binary_rule, "Integer constraints for binary items");
  f->add_flag("--allow-experimental", fit.experimental, "Permit the geometric-mean regime");

  TransformArgs tr;
  auto* t = app.add_subcommand("transform", "Re-express fitted parameters under another regime");
  t->add_option("params", tr.params, "Regime-tagged parameter file")->required()->check(CLI::ExistingFile);
  t->add_option("--to", tr.to, "Target regime")->required();
  t->add_option("--out", tr.out, "Transformed parameter file");
  t->add_option("--audit", tr.audit, "Transform audit file (default <out>.transform.json)");
  t->add_flag("--binary-rule", tr.binary_rule);
  t->add_flag("--allow-experimental", tr.experimental);

  ScoreArgs sc;
  auto* s = app.add_subcommand("score", "Latent-variable predictions per respondent");
  s->add_option("data", sc.data)->required()->check(CLI::ExistingFile);
  s->add_option("params", sc.params)->required()->check(CLI::ExistingFile);
  s->add_option("--method", sc.method, "map or ml")->capture_default_str();
  s->add_option("--out", sc.out, "Scores CSV (default stdout)");
  s->add_option("--threads", sc.threads, "0 = all cores");
  s->add_flag("--recode", sc.recode);

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Score every response pattern of the sum-score model");
  w->add_option("--p", sw.p, "Item count or range A..B")->capture_default_str();
  w->add_option("--K", sw.K, "Categories per item")->capture_default_str();
  w->add_option("--cap", sw.cap, "Largest pattern count per p")->capture_default_str();
  w->add_option("--variance", sw.variance, "Latent variance (default p)");
  w->add_option("--out", sw.out, "Sweep CSV (default stdout)");

  CurveArgs cv;
  auto* c = app.add_subcommand("curve", "Expected average item score as a function of eta");
  c->add_option("params", cv.params)->required()->check(CLI::ExistingFile);
  c->add_option("--from", cv.from)->capture_default_str();
  c->add_option("--to", cv.to)->capture_default_str();
  c->add_option("--points", cv.points)->capture_default_str();
  c->add_option("--out", cv.out);

  SimulateArgs sm;
  auto* m = app.add_subcommand("simulate", "Monte Carlo comparison of identification regimes");
  m->add_option("config", sm.config, "Study description (JSON)")->required()->check(CLI::ExistingFile);
  m->add_option("--reps", sm.reps, "Override the configured replications");
  m->add_option("--seed", sm.seed, "Override the configured master seed");
  m->add_option("--nodes", sm.nodes, "Override quadrature nodes per factor");
  m->add_option("--threads", sm.threads, "Worker threads (0 = all cores)");
  m->add_option("--out", sm.out, "Output directory")->required();

  SumscoreArgs ss;
  auto* l = app.add_subcommand("sumscore-test", "Likelihood-ratio test of the sum-score model");
  l->add_option("data", ss.data)->required()->check(CLI::ExistingFile);
  l->add_option("model", ss.model)->required()->check(CLI::ExistingFile);
  l->add_option("--nodes", ss.nodes);
  l->add_option("--out", ss.out);
  l->add_flag("--recode", ss.recode);

  IdentifyArgs id;
  auto* v = app.add_subcommand("identify", "Check that a constraint regime identifies a model");
  v->add_option("model", id.model)->required()->check(CLI::ExistingFile);
  v->add_option("--constraints", id.constraints)->capture_default_str();
  v->add_option("--K", id.K, "Categories for items without item=K");
  v->add_option("--seed", id.seed)->capture_default_str();
  v->add_flag("--binary-rule", id.binary_rule);
  v->add_flag("--allow-experimental", id.experimental);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (f->parsed()) return cmd_fit(fit);
    if (t->parsed()) return cmd_transform(tr);
    if (s->parsed()) return cmd_score(sc);
    if (w->parsed()) return cmd_sweep(sw);
    if (c->parsed()) return cmd_curve(cv);
    if (m->parsed()) return cmd_simulate(sm);
    if (l->parsed()) return cmd_sumscore_test(ss);
    if (v->parsed()) return cmd_identify(id);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNonconvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace ordcfa
