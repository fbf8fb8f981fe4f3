#include "ordcfa/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ordcfa/errors.hpp"

namespace ordcfa {

using json = nlohmann::ordered_json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string content_digest(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::filesystem::path& path) {
  return content_digest(read_text_file(path));
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_int(std::string_view s, int& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line, int lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw SpecError("line " + std::to_string(lineno) + ": unterminated quote");
  out.push_back(trim(cur));
  return out;
}

}  // namespace

std::vector<std::string> ModelDescription::item_names() const {
  std::vector<std::string> out;
  for (const auto& f : factors)
    for (const auto& i : f.items) out.push_back(i.name);
  return out;
}

ModelDescription parse_model_description(std::string_view text) {
  ModelDescription d;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto colon = t.find(':');
    if (colon == std::string::npos)
      throw SpecError("model line " + std::to_string(lineno) +
                      ": expected 'factor: item item ...'");
    ModelDescription::Factor f;
    f.name = trim(std::string_view(t).substr(0, colon));
    if (f.name.empty())
      throw SpecError("model line " + std::to_string(lineno) + ": missing factor name");
    std::istringstream items(t.substr(colon + 1));
    std::string tok;
    while (items >> tok) {
      ModelDescription::Item it;
      if (auto eq = tok.find('='); eq != std::string::npos) {
        it.name = tok.substr(0, eq);
        if (!parse_int(std::string_view(tok).substr(eq + 1), it.categories) || it.categories < 2)
          throw SpecError("model line " + std::to_string(lineno) + ": bad category count in '" +
                          tok + "'");
      } else {
        it.name = tok;
      }
      if (it.name.empty())
        throw SpecError("model line " + std::to_string(lineno) + ": empty item name");
      f.items.push_back(it);
    }
    if (f.items.empty())
      throw SpecError("model line " + std::to_string(lineno) + ": factor " + f.name +
                      " has no items");
    d.factors.push_back(std::move(f));
  }
  if (d.factors.empty()) throw SpecError("model description declares no factors");
  return d;
}

ModelDescription read_model_description(const std::filesystem::path& path) {
  return parse_model_description(read_text_file(path));
}

CsvTable read_csv_codes(std::istream& in, const std::vector<std::string>& wanted,
                        const CsvOptions& opt) {
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    header = split_csv_line(line, lineno);
    break;
  }
  if (header.empty()) throw SpecError("CSV has no header row");
  if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
    header[0].erase(0, 3);

  std::vector<int> pick;
  CsvTable t;
  if (wanted.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) pick.push_back(static_cast<int>(c));
    t.columns = header;
  } else {
    for (const auto& w : wanted) {
      auto it = std::find(header.begin(), header.end(), w);
      if (it == header.end()) throw SpecError("CSV has no column named '" + w + "'");
      pick.push_back(static_cast<int>(it - header.begin()));
    }
    t.columns = wanted;
  }

  std::vector<std::vector<std::string>> kept;
  std::vector<int> kept_lines;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, lineno);
    if (fields.size() != header.size())
      throw SpecError("line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    ++t.rows_read;
    std::vector<std::string> row;
    bool missing = false;
    for (int c : pick) {
      row.push_back(fields[static_cast<std::size_t>(c)]);
      if (row.back().empty() || row.back() == "NA") missing = true;
    }
    if (missing) {
      ++t.rows_dropped;
      continue;
    }
    kept.push_back(std::move(row));
    kept_lines.push_back(lineno);
  }

  const auto n = static_cast<Eigen::Index>(kept.size());
  const auto cols = static_cast<Eigen::Index>(pick.size());
  t.codes.resize(n, cols);
  t.labels.assign(pick.size(), {});
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (opt.recode) {
      std::set<std::string> distinct;
      for (const auto& r : kept) distinct.insert(r[static_cast<std::size_t>(c)]);
      std::vector<std::string> order(distinct.begin(), distinct.end());
      bool numeric = true;
      for (const auto& s : order) {
        double v;
        numeric = numeric && parse_double(s, v);
      }
      if (numeric)
        std::sort(order.begin(), order.end(), [](const std::string& a, const std::string& b) {
          double x = 0, y = 0;
          parse_double(a, x);
          parse_double(b, y);
          return x < y;
        });
      std::map<std::string, int> code;
      for (std::size_t k = 0; k < order.size(); ++k) code[order[k]] = static_cast<int>(k) + 1;
      for (Eigen::Index i = 0; i < n; ++i)
        t.codes(i, c) = code[kept[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]];
      t.labels[static_cast<std::size_t>(c)] = order;
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = kept[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        int v = 0;
        if (!parse_int(s, v))
          throw SpecError("line " + std::to_string(kept_lines[static_cast<std::size_t>(i)]) +
                          ", column " + t.columns[static_cast<std::size_t>(c)] +
                          ": '" + s + "' is not an integer code (use --recode for labels)");
        if (v < 1)
          throw SpecError("line " + std::to_string(kept_lines[static_cast<std::size_t>(i)]) +
                          ", column " + t.columns[static_cast<std::size_t>(c)] +
                          ": code " + s + " is below 1");
        t.codes(i, c) = v;
      }
    }
  }
  return t;
}

CsvTable read_csv_codes(const std::filesystem::path& path,
                        const std::vector<std::string>& wanted, const CsvOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open " + path.string());
  return read_csv_codes(in, wanted, opt);
}

ModelSpec resolve_model(const ModelDescription& desc, const CsvTable& table) {
  std::vector<ItemInfo> items;
  std::vector<FactorPattern> pattern;
  for (const auto& f : desc.factors) {
    FactorPattern fp{f.name, {}};
    for (const auto& it : f.items) {
      auto col = std::find(table.columns.begin(), table.columns.end(), it.name);
      if (col == table.columns.end())
        throw SpecError("data has no column for item '" + it.name + "'");
      const auto c = static_cast<Eigen::Index>(col - table.columns.begin());
      int K = it.categories;
      if (K == 0) {
        const auto& labels = table.labels[static_cast<std::size_t>(c)];
        if (!labels.empty())
          K = static_cast<int>(labels.size());
        else
          K = table.codes.rows() > 0 ? table.codes.col(c).maxCoeff() : 2;
        K = std::max(K, 2);
      }
      items.push_back({it.name, K});
      fp.items.push_back(it.name);
    }
    pattern.push_back(std::move(fp));
  }
  return build_model_spec(std::move(items), std::move(pattern));
}

LoadedData load_data(const std::filesystem::path& csv,
                     const std::filesystem::path& model, const CsvOptions& opt) {
  const auto desc = read_model_description(model);
  const auto table = read_csv_codes(csv, desc.item_names(), opt);
  LoadedData d;
  d.spec = resolve_model(desc, table);
  d.responses = make_responses(table.codes, d.spec);
  d.rows_read = table.rows_read;
  d.rows_dropped = table.rows_dropped;
  return d;
}

ResponseMatrix load_responses(const std::filesystem::path& csv, const ModelSpec& spec,
                              const CsvOptions& opt, int* rows_dropped) {
  std::vector<std::string> names;
  for (const auto& it : spec.items()) names.push_back(it.name);
  auto table = read_csv_codes(csv, names, opt);
  if (rows_dropped) *rows_dropped = table.rows_dropped;
  return make_responses(std::move(table.codes), spec);
}

ParamAddress parse_param_address(std::string_view text) {
  const auto open = text.find('[');
  if (open == std::string_view::npos || text.back() != ']')
    throw SpecError("bad parameter address '" + std::string(text) + "'");
  const std::string_view kind = text.substr(0, open);
  const std::string_view inner = text.substr(open + 1, text.size() - open - 2);
  int a = 0, b = 0;
  bool two = false;
  if (auto comma = inner.find(','); comma != std::string_view::npos) {
    two = true;
    if (!parse_int(inner.substr(0, comma), a) || !parse_int(inner.substr(comma + 1), b))
      throw SpecError("bad parameter address '" + std::string(text) + "'");
  } else if (!parse_int(inner, a)) {
    throw SpecError("bad parameter address '" + std::string(text) + "'");
  }
  if (kind == "nu" && !two) return addr::intercept(a);
  if (kind == "lambda" && two) return addr::loading(a, b);
  if (kind == "tau" && two) return addr::threshold(a, b);
  if (kind == "theta" && !two) return addr::residual(a);
  if (kind == "kappa" && !two) return addr::mean(a);
  if (kind == "phi" && two) return addr::covariance(a, b);
  throw SpecError("bad parameter address '" + std::string(text) + "'");
}

json params_to_json(const ParameterSet& ps, const ModelSpec& spec, Regime regime) {
  json j;
  j["format"] = "ordcfa-params";
  j["version"] = 1;
  j["regime"] = to_string(regime);
  j["fingerprint"] = spec.fingerprint();
  json model = json::array();
  for (int q = 0; q < spec.factor_count(); ++q) {
    json f;
    f["name"] = spec.factor_name(q);
    json items = json::array();
    for (int i : spec.items_of(q))
      items.push_back({{"name", spec.item(i).name}, {"categories", spec.categories(i)}});
    f["items"] = items;
    model.push_back(f);
  }
  j["model"] = model;
  json items = json::array();
  for (int i = 0; i < spec.item_count(); ++i) {
    json it;
    it["name"] = spec.item(i).name;
    it["nu"] = ps.nu(i);
    it["lambda"] = ps.item_loading(spec, i);
    it["thresholds"] = std::vector<double>(ps.thresholds[static_cast<std::size_t>(i)].data(),
                                           ps.thresholds[static_cast<std::size_t>(i)].data() +
                                               ps.thresholds[static_cast<std::size_t>(i)].size());
    it["theta"] = ps.theta(i);
    items.push_back(it);
  }
  j["items"] = items;
  j["kappa"] = std::vector<double>(ps.kappa.data(), ps.kappa.data() + ps.kappa.size());
  json phi = json::array();
  for (Eigen::Index r = 0; r < ps.phi.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(ps.phi.cols()));
    for (Eigen::Index c = 0; c < ps.phi.cols(); ++c) row[static_cast<std::size_t>(c)] = ps.phi(r, c);
    phi.push_back(row);
  }
  j["phi"] = phi;
  json fixed = json::array();
  for (const auto& a : ps.fixed) fixed.push_back(to_string(a));
  j["fixed"] = fixed;
  return j;
}

ParamsFile params_from_json(const json& j) {
  if (!j.is_object()) throw SpecError("parameter file is not a JSON object");
  if (!j.contains("regime") || !j["regime"].is_string())
    throw SpecError("parameter file carries no regime tag; refusing to guess the "
                    "identification constraints");
  if (!j.contains("fingerprint") || !j["fingerprint"].is_string())
    throw SpecError("parameter file carries no model fingerprint");
  ParamsFile out;
  try {
    out.regime = parse_regime(j["regime"].get<std::string>());
    std::vector<ItemInfo> infos;
    std::vector<FactorPattern> pattern;
    for (const auto& f : j.at("model")) {
      FactorPattern fp{f.at("name").get<std::string>(), {}};
      for (const auto& it : f.at("items")) {
        infos.push_back({it.at("name").get<std::string>(), it.at("categories").get<int>()});
        fp.items.push_back(infos.back().name);
      }
      pattern.push_back(std::move(fp));
    }
    // item order in the file's item list wins over factor grouping
    std::vector<ItemInfo> ordered;
    for (const auto& it : j.at("items")) {
      const auto name = it.at("name").get<std::string>();
      auto f = std::find_if(infos.begin(), infos.end(),
                            [&](const ItemInfo& x) { return x.name == name; });
      if (f == infos.end()) throw SpecError("item '" + name + "' is not in the model");
      ordered.push_back(*f);
    }
    out.spec = build_model_spec(std::move(ordered), std::move(pattern));
    if (out.spec.fingerprint() != j["fingerprint"].get<std::string>())
      throw SpecError("parameter file fingerprint does not match its model");

    const int p = out.spec.item_count();
    const int m = out.spec.factor_count();
    ParameterSet ps = ParameterSet::defaults(out.spec);
    const auto& items = j.at("items");
    for (int i = 0; i < p; ++i) {
      const auto& it = items.at(static_cast<std::size_t>(i));
      ps.nu(i) = it.at("nu").get<double>();
      ps.lambda(i, out.spec.factor_of(i)) = it.at("lambda").get<double>();
      const auto t = it.at("thresholds").get<std::vector<double>>();
      if (static_cast<int>(t.size()) != out.spec.threshold_count(i))
        throw SpecError("item '" + out.spec.item(i).name + "' has " + std::to_string(t.size()) +
                        " thresholds, expected " + std::to_string(out.spec.threshold_count(i)));
      for (std::size_t k = 0; k < t.size(); ++k) ps.thresholds[static_cast<std::size_t>(i)](static_cast<Eigen::Index>(k)) = t[k];
      ps.theta(i) = it.at("theta").get<double>();
    }
    const auto kappa = j.at("kappa").get<std::vector<double>>();
    const auto phi = j.at("phi").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(kappa.size()) != m || static_cast<int>(phi.size()) != m)
      throw SpecError("latent mean or covariance has the wrong size");
    for (int q = 0; q < m; ++q) {
      ps.kappa(q) = kappa[static_cast<std::size_t>(q)];
      if (static_cast<int>(phi[static_cast<std::size_t>(q)].size()) != m)
        throw SpecError("latent covariance row has the wrong size");
      for (int r = 0; r < m; ++r) ps.phi(q, r) = phi[static_cast<std::size_t>(q)][static_cast<std::size_t>(r)];
    }
    ps.fixed.clear();
    for (const auto& a : j.at("fixed")) ps.fixed.insert(parse_param_address(a.get<std::string>()));
    out.params = std::move(ps);
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed parameter file: ") + e.what());
  }
  for (const auto& [k, v] : j.items()) {
    static const std::set<std::string> own{"format", "version", "regime", "fingerprint", "model",
                                           "items",  "kappa",   "phi",    "fixed"};
    if (!own.contains(k)) out.extra[k] = v;
  }
  return out;
}

void write_params(const std::filesystem::path& path, const ParameterSet& ps,
                  const ModelSpec& spec, Regime regime, const json& extra) {
  json j = params_to_json(ps, spec, regime);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpecError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ParamsFile read_params(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw SpecError(path.string() + ": " + e.what());
  }
  return params_from_json(j);
}

json transform_to_json(const TransformSet& t) {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  json j;
  j["D"] = vec(t.D);
  j["Delta"] = vec(t.Delta);
  j["beta"] = vec(t.beta);
  j["gamma"] = vec(t.gamma);
  return j;
}

TransformSet transform_from_json(const json& j) {
  auto vec = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  try {
    return TransformSet{vec("D"), vec("Delta"), vec("beta"), vec("gamma")};
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed transform: ") + e.what());
  }
}

StudyConfig parse_study_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("study config: ") + e.what());
  }
  StudyConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.reps = j.value("reps", cfg.reps);
    cfg.sample_size = j.value("sample_size", cfg.sample_size);
    cfg.nodes = j.value("nodes", cfg.nodes);
    cfg.threads = j.value("threads", cfg.threads);
    const double corr = j.value("factor_correlation", 0.3);
    if (j.contains("regimes")) {
      cfg.regimes.clear();
      for (const auto& r : j["regimes"]) cfg.regimes.push_back(parse_regime(r.get<std::string>()));
    }
    if (j.contains("starts")) {
      cfg.starts.clear();
      for (const auto& s : j["starts"]) cfg.starts.push_back(parse_start_regime(s.get<std::string>()));
    }
    for (const auto& c : j.at("cells")) {
      StudyCell cell;
      PopulationCondition& pc = cell.condition;
      pc.factor_correlation = corr;
      pc.indicators_per_factor = c.value("indicators", pc.indicators_per_factor);
      pc.loading = c.value("loading", pc.loading);
      pc.categories = c.value("categories", pc.categories);
      pc.distribution = parse_response_distribution(c.value("distribution", std::string("symmetric")));
      pc.prop_sparse = c.value("prop_sparse", pc.prop_sparse);
      pc.factors = c.value("factors", pc.factors);
      pc.factor_correlation = c.value("factor_correlation", pc.factor_correlation);
      cell.name = c.value("name", "cell" + std::to_string(cfg.cells.size() + 1));
      cfg.cells.push_back(std::move(cell));
    }
  } catch (const json::exception& e) {
    throw SpecError(std::string("study config: ") + e.what());
  }
  if (cfg.cells.empty()) throw SpecError("study config lists no cells");
  if (cfg.reps < 1) throw SpecError("study config: reps must be at least 1");
  if (cfg.sample_size < 1) throw SpecError("study config: sample_size must be positive");
  return cfg;
}

StudyConfig read_study_config(const std::filesystem::path& path) {
  return parse_study_config(read_text_file(path));
}

void write_scores_csv(std::ostream& out, const std::vector<RowScore>& scores,
                      const ModelSpec& spec) {
  const int m = spec.factor_count();
  out << "row,average";
  for (int q = 0; q < m; ++q) out << ",eta" << (m > 1 ? "_" + spec.factor_name(q) : "");
  for (int q = 0; q < m; ++q) out << ",flag" << (m > 1 ? "_" + spec.factor_name(q) : "");
  out << '\n';
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    out << i + 1 << ',' << shortest(s.average);
    for (int q = 0; q < m; ++q) out << ',' << shortest(s.eta(q));
    for (int q = 0; q < m; ++q) {
      const int d = s.direction.size() > q ? s.direction(q) : 0;
      out << ',' << (d > 0 ? "+" : (d < 0 ? "-" : ""));
    }
    out << '\n';
  }
}

std::vector<RowScore> read_scores_csv(std::istream& in, int m) {
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw SpecError("scores file is empty");
  ++lineno;
  std::vector<RowScore> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line, lineno);
    if (static_cast<int>(f.size()) != 2 + 2 * m)
      throw SpecError("scores line " + std::to_string(lineno) + ": wrong field count");
    RowScore s;
    s.eta.resize(m);
    s.direction = Eigen::VectorXi::Zero(m);
    if (!parse_double(f[1], s.average))
      throw SpecError("scores line " + std::to_string(lineno) + ": bad average");
    for (int q = 0; q < m; ++q) {
      if (!parse_double(f[static_cast<std::size_t>(2 + q)], s.eta(q)))
        throw SpecError("scores line " + std::to_string(lineno) + ": bad score");
      const auto& flag = f[static_cast<std::size_t>(2 + m + q)];
      s.direction(q) = flag == "+" ? 1 : (flag == "-" ? -1 : 0);
    }
    s.diverged = (s.direction.array() != 0).any();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ordcfa
