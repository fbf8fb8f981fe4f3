#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ordcfa/errors.hpp"
#include "ordcfa/identification.hpp"
#include "ordcfa/io.hpp"

using namespace ordcfa;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const SpecError& e) {
    return e.what();
  }
  return {};
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / ("ordcfa_test_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

}  // namespace

TEST_CASE("content digest") {
  CHECK(content_digest("") == "cbf29ce484222325");
  CHECK(content_digest("a") == "af63dc4c8601ec8c");
  auto p = temp_file("digest.txt", "a");
  CHECK(file_digest(p) == "af63dc4c8601ec8c");
  std::filesystem::remove(p);
}

TEST_CASE("model description parsing") {
  auto d = parse_model_description(
      "# science items\n"
      "attitude: comfort=4 environment=4 work\n"
      "\n"
      "other: a=5 b   # trailing comment\n");
  REQUIRE(d.factors.size() == 2);
  CHECK(d.factors[0].name == "attitude");
  CHECK(d.factors[0].items.size() == 3);
  CHECK(d.factors[0].items[0].categories == 4);
  CHECK(d.factors[0].items[2].categories == 0);
  CHECK(d.item_names() == std::vector<std::string>{"comfort", "environment", "work", "a", "b"});

  CHECK(error_of([] { parse_model_description("f: a=4\nno colon here\n"); }).find("line 2") !=
        std::string::npos);
  CHECK(error_of([] { parse_model_description("f: a=1\n"); }).find("line 1") != std::string::npos);
  CHECK_THROWS_AS(parse_model_description("f:\n"), SpecError);
  CHECK_THROWS_AS(parse_model_description("# nothing\n"), SpecError);
}

TEST_CASE("CSV reading") {
  std::istringstream in("a,b,c\n1,2,3\n2,,1\n3,3,3\n");
  auto t = read_csv_codes(in);
  CHECK(t.columns == std::vector<std::string>{"a", "b", "c"});
  CHECK(t.rows_read == 3);
  CHECK(t.rows_dropped == 1);
  REQUIRE(t.codes.rows() == 2);
  CHECK(t.codes(1, 0) == 3);

  std::istringstream sel("a,b,c\n1,2,3\n");
  auto s = read_csv_codes(sel, {"c", "a"});
  CHECK(s.columns == std::vector<std::string>{"c", "a"});
  CHECK(s.codes(0, 0) == 3);

  std::istringstream bad("a,b\n1,2\n1,x\n");
  auto msg = error_of([&] { read_csv_codes(bad); });
  CHECK(msg.find("line 3") != std::string::npos);

  std::istringstream ragged("a,b\n1,2\n1\n");
  CHECK(error_of([&] { read_csv_codes(ragged); }).find("line 3") != std::string::npos);

  std::istringstream missing("a,b\n1,2\n");
  CHECK_THROWS_AS(read_csv_codes(missing, {"z"}), SpecError);
}

TEST_CASE("CSV recoding") {
  std::istringstream in("x,y\nlow,10\nhigh,30\nmid,20\nlow,30\n");
  CsvOptions opt;
  opt.recode = true;
  auto t = read_csv_codes(in, {}, opt);
  CHECK(t.labels[1] == std::vector<std::string>{"10", "20", "30"});
  CHECK(t.codes(0, 1) == 1);
  CHECK(t.codes(1, 1) == 3);
  CHECK(t.labels[0] == std::vector<std::string>{"high", "low", "mid"});
}

TEST_CASE("model resolution and data loading") {
  auto csv = temp_file("load.csv", "i1,i2,i3,extra\n1,2,3,9\n2,2,1,9\n,1,1,9\n3,1,2,9\n");
  auto model = temp_file("load.model", "f: i1=4 i2 i3\n");
  auto loaded = load_data(csv, model);
  CHECK(loaded.spec.item_count() == 3);
  CHECK(loaded.spec.categories(0) == 4);
  CHECK(loaded.spec.categories(1) == 2);
  CHECK(loaded.spec.categories(2) == 3);
  CHECK(loaded.rows_read == 4);
  CHECK(loaded.rows_dropped == 1);
  CHECK(loaded.responses.rows() == 3);

  auto bad_model = temp_file("bad.model", "f: i1=2 i2 i3\n");
  CHECK_THROWS_AS(load_data(csv, bad_model), SpecError);
  std::filesystem::remove(csv);
  std::filesystem::remove(model);
  std::filesystem::remove(bad_model);
}

TEST_CASE("parameter addresses round trip through text") {
  auto spec = clustered_spec({2, 3}, 4);
  for (const auto& a : parameter_addresses(spec)) CHECK(parse_param_address(to_string(a)) == a);
  CHECK_THROWS_AS(parse_param_address("lambda[1]"), SpecError);
  CHECK_THROWS_AS(parse_param_address("omega[1]"), SpecError);
}

TEST_CASE("parameter files") {
  auto spec = clustered_spec({3, 2}, 5);
  auto ps = random_traditional_parameters(spec, 4);
  ps.phi(1, 0) = ps.phi(0, 1) = 0.1234567890123;
  apply_fixes(ps, make_constraints(spec, Regime::Traditional));
  auto path = std::filesystem::temp_directory_path() / "ordcfa_test_params.json";
  nlohmann::ordered_json extra;
  extra["note"] = "kept";
  write_params(path, ps, spec, Regime::Traditional, extra);
  auto back = read_params(path);
  CHECK(back.regime == Regime::Traditional);
  CHECK(back.spec == spec);
  CHECK(max_abs_difference(ps, back.params, spec) == 0.0);
  CHECK(back.params.fixed == ps.fixed);
  CHECK(back.extra["note"] == "kept");

  auto j = params_to_json(ps, spec, Regime::Integer);
  auto untagged = j;
  untagged.erase("regime");
  CHECK(error_of([&] { params_from_json(untagged); }).find("regime") != std::string::npos);
  auto mismatched = j;
  mismatched["fingerprint"] = "0000";
  CHECK_THROWS_AS(params_from_json(mismatched), SpecError);
  std::filesystem::remove(path);
}

TEST_CASE("transform JSON") {
  auto spec = single_factor_spec(3, 4);
  auto t = TransformSet::identity(spec);
  t.D(0) = 2.5;
  t.gamma(2) = -1.25;
  auto back = transform_from_json(transform_to_json(t));
  CHECK(back.D(0) == 2.5);
  CHECK(back.gamma(2) == -1.25);
  CHECK_THROWS_AS(transform_from_json(nlohmann::ordered_json::object()), SpecError);
}

TEST_CASE("study config") {
  auto cfg = parse_study_config(R"({
    "seed": 11, "reps": 4, "sample_size": 300, "nodes": 9,
    "starts": ["simple"],
    "cells": [
      {"name": "hard", "indicators": 6, "loading": 0.4, "categories": 3,
       "distribution": "middling", "prop_sparse": 1.0, "factors": 1},
      {"loading": 0.8}
    ]})");
  CHECK(cfg.seed == 11);
  CHECK(cfg.reps == 4);
  CHECK(cfg.nodes == 9);
  CHECK(cfg.starts == std::vector<StartRegime>{StartRegime::Simple});
  REQUIRE(cfg.cells.size() == 2);
  CHECK(cfg.cells[0].name == "hard");
  CHECK(cfg.cells[0].condition.distribution == ResponseDistribution::Middling);
  CHECK(cfg.cells[1].name == "cell2");
  CHECK(cfg.cells[1].condition.categories == 5);
  CHECK_THROWS_AS(parse_study_config("{\"cells\": []}"), SpecError);
  CHECK_THROWS_AS(parse_study_config("{not json"), SpecError);
  CHECK_THROWS_AS(parse_study_config(R"({"cells": [{"distribution": "odd"}]})"), SpecError);
}

TEST_CASE("scores CSV round trip is exact") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> z;
  for (int m : {1, 2}) {
    auto spec = clustered_spec(std::vector<int>(static_cast<std::size_t>(m), 2), 4);
    std::vector<RowScore> scores(20);
    for (auto& s : scores) {
      s.average = 1.0 + std::abs(z(rng));
      s.eta = Eigen::VectorXd(m);
      s.direction = Eigen::VectorXi::Zero(m);
      for (int q = 0; q < m; ++q) s.eta(q) = z(rng) / 3.0;
    }
    scores[3].direction(0) = 1;
    scores[3].diverged = true;
    std::stringstream buf;
    write_scores_csv(buf, scores, spec);
    auto back = read_scores_csv(buf, m);
    REQUIRE(back.size() == scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      CHECK(back[i].average == scores[i].average);
      for (int q = 0; q < m; ++q) CHECK(back[i].eta(q) == scores[i].eta(q));
      CHECK(back[i].direction == scores[i].direction);
      CHECK(back[i].diverged == scores[i].diverged);
    }
  }
}
