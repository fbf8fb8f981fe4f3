#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "ordcfa/io.hpp"

using namespace ordcfa;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "ordcfa");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path data_dir() {
  const char* env = std::getenv("ORDCFA_DATA_DIR");
  return env ? fs::path(env) : fs::path("data");
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "ordcfa_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int count_lines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("fit under integer constraints") {
  auto out = scratch() / "int.json";
  auto r = run({"fit", (data_dir() / "science_simulated.csv").string(),
                (data_dir() / "science.model").string(), "--constraints", "integer", "--out",
                out.string()});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("converged yes") != std::string::npos);
  auto pf = read_params(out);
  CHECK(pf.regime == Regime::Integer);
  CHECK(std::abs(pf.params.lambda.col(0).mean() - 1.0) < 1e-8);
  CHECK(std::abs(pf.params.nu.sum()) < 1e-8);
  CHECK(pf.extra["fit"]["converged"] == true);
  CHECK(fs::exists(scratch() / "int.manifest.json"));

  auto scores = scratch() / "scores.csv";
  auto s = run({"score", (data_dir() / "science_simulated.csv").string(), out.string(), "--out",
                scores.string()});
  REQUIRE(s.code == kExitOk);
  CHECK(count_lines(slurp(scores)) == 393);
  const auto at = s.err.find("correlation(average, score) ");
  REQUIRE(at != std::string::npos);
  CHECK(std::stod(s.err.substr(at + 28)) > 0.95);
}

TEST_CASE("fit rejects malformed input") {
  auto bad = scratch() / "bad.csv";
  std::ofstream(bad) << "comfort,environment,work,future,technology,industry,benefit\n"
                     << "1,2,3,4,1,2,3\n"
                     << "1,2,x,4,1,2,3\n";
  auto r = run({"fit", bad.string(), (data_dir() / "science.model").string()});
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("line 3") != std::string::npos);

  auto missing = run({"fit", (scratch() / "nope.csv").string(),
                      (data_dir() / "science.model").string()});
  CHECK(missing.code == kExitInput);
  auto regime = run({"fit", (data_dir() / "science_simulated.csv").string(),
                     (data_dir() / "science.model").string(), "--constraints", "bogus"});
  CHECK(regime.code == kExitInput);
}

TEST_CASE("iteration limit reports nonconvergence") {
  auto r = run({"fit", (data_dir() / "science_simulated.csv").string(),
                (data_dir() / "science.model").string(), "--max-iter", "2", "--out",
                (scratch() / "partial.json").string()});
  CHECK(r.code == kExitNonconvergence);
  CHECK(fs::exists(scratch() / "partial.json"));
}

TEST_CASE("transform the published traditional estimates") {
  auto out = scratch() / "science_int.json";
  auto r = run({"transform", (data_dir() / "science_traditional.json").string(), "--to",
                "integer", "--out", out.string()});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  auto pf = read_params(out);
  const double middle[7] = {2.12, 2.48, 2.27, 2.32, 2.52, 2.32, 2.41};
  for (int j = 0; j < 7; ++j) CHECK(std::abs(pf.params.thresholds[j](1) - middle[j]) <= 0.02);
  const auto at = r.out.find("round-trip max deviation ");
  REQUIRE(at != std::string::npos);
  CHECK(std::stod(r.out.substr(at + 25)) < 1e-10);
  CHECK(fs::exists(scratch() / "science_int.transform.json"));

  auto back = scratch() / "science_back.json";
  auto b = run({"transform", out.string(), "--to", "traditional", "--out", back.string()});
  REQUIRE(b.code == kExitOk);
  auto tb = read_params(back);
  CHECK(tb.params.nu.cwiseAbs().maxCoeff() < 1e-12);

  auto curve = run({"curve", out.string(), "--points", "11"});
  CHECK(curve.code == kExitOk);
  CHECK(count_lines(curve.out) == 12);
}

TEST_CASE("transform refuses untagged parameter files") {
  auto j = nlohmann::json::parse(slurp(data_dir() / "science_traditional.json"));
  j.erase("regime");
  auto untagged = scratch() / "untagged.json";
  std::ofstream(untagged) << j.dump();
  auto r = run({"transform", untagged.string(), "--to", "integer"});
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("regime") != std::string::npos);
}

TEST_CASE("scoring identical rows and divergent ML") {
  auto csv = scratch() / "same.csv";
  {
    std::ofstream f(csv);
    f << "comfort,environment,work,future,technology,industry,benefit\n";
    for (int i = 0; i < 5; ++i) f << "3,3,3,3,3,3,3\n";
    f << "4,4,4,4,4,4,4\n";
  }
  auto map = run({"score", csv.string(), (data_dir() / "science_traditional.json").string()});
  REQUIRE(map.code == kExitOk);
  std::istringstream in(map.out);
  auto rows = read_scores_csv(in, 1);
  REQUIRE(rows.size() == 6);
  for (int i = 1; i < 5; ++i) CHECK(rows[i].eta(0) == rows[0].eta(0));

  auto ml = run({"score", csv.string(), (data_dir() / "science_traditional.json").string(),
                 "--method", "ml"});
  REQUIRE(ml.code == kExitOk);
  std::istringstream mlin(ml.out);
  auto mlrows = read_scores_csv(mlin, 1);
  CHECK_FALSE(mlrows[0].diverged);
  CHECK(mlrows[5].diverged);
  CHECK(mlrows[5].direction(0) == 1);
}

TEST_CASE("pattern sweep") {
  auto out = scratch() / "sweep.csv";
  auto r = run({"sweep", "--p", "2", "--K", "5", "--out", out.string()});
  REQUIRE(r.code == kExitOk);
  auto text = slurp(out);
  CHECK(count_lines(text) == 26);
  CHECK(text.find("\n2,11,1,") != std::string::npos);
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  int extreme = 0;
  while (std::getline(lines, line)) {
    std::vector<std::string> field;
    std::istringstream cells(line);
    for (std::string c; std::getline(cells, c, ',');) field.push_back(c);
    REQUIRE(field.size() == 8);
    const bool has_end = field[1].find_first_of("15") != std::string::npos;
    CHECK((field[6] == "1") == has_end);
    extreme += has_end;
  }
  CHECK(extreme == 16);
  auto capped = run({"sweep", "--p", "2..6", "--K", "5", "--cap", "1000"});
  CHECK(capped.code == kExitInput);
}

TEST_CASE("simulation smoke run") {
  auto a = scratch() / "study_a";
  auto b = scratch() / "study_b";
  auto cfg = (data_dir() / "smoke_study.json").string();
  auto r1 = run({"simulate", cfg, "--out", a.string(), "--threads", "1"});
  INFO(r1.err);
  REQUIRE(r1.code == kExitOk);
  CHECK(r1.out.find("60 fits (2 cells x 5 reps x 3 regimes x 2 starts)") != std::string::npos);
  auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["fits"] == 60);
  auto r2 = run({"simulate", cfg, "--out", b.string()});
  REQUIRE(r2.code == kExitOk);
  for (const char* f : {"rates.csv", "identical_fit.csv", "best_fit.csv", "replications.csv",
                        "manifest.json"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
}

TEST_CASE("sum-score test") {
  auto out = scratch() / "lr.json";
  auto r = run({"sumscore-test", (data_dir() / "science_simulated.csv").string(),
                (data_dir() / "science.model").string(), "--out", out.string()});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["df"] == j["integer"]["free_parameters"].get<int>() -
                       j["sumscore"]["free_parameters"].get<int>());
  CHECK(j["statistic"].get<double>() >= 0.0);
  CHECK(r.out.find("LR statistic") != std::string::npos);
}

TEST_CASE("identification command") {
  auto r = run({"identify", (data_dir() / "science.model").string(), "--constraints", "integer"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("integer: identifying") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == kExitInput);
  CHECK(run({"frobnicate"}).code == kExitInput);
  CHECK(run({"--help"}).code == kExitOk);
}
