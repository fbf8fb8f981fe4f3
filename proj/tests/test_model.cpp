#include <doctest.h>

#include <cmath>
#include <random>

#include "ordcfa/errors.hpp"
#include "ordcfa/model.hpp"
#include "ordcfa/transform.hpp"

using namespace ordcfa;

namespace {

bool has_fix(const ConstraintSet& cs, const ParamAddress& a, double value) {
  for (const auto& f : cs.fixes)
    if (f.address == a && f.value == value) return true;
  return false;
}

}  // namespace

TEST_CASE("spec sizes") {
  auto s7 = single_factor_spec(7, 4);
  CHECK(s7.item_count() == 7);
  CHECK(s7.factor_count() == 1);
  CHECK(s7.factor_size(0) == 7);

  auto s1 = single_factor_spec(1, 3);
  CHECK(s1.item_count() == 1);
  CHECK(s1.factor_count() == 1);
  CHECK(s1.factor_size(0) == 1);

  auto s9 = clustered_spec({3, 3, 3}, 5);
  CHECK(s9.item_count() == 9);
  CHECK(s9.factor_count() == 3);
  for (int q = 0; q < 3; ++q) CHECK(s9.factor_size(q) == 3);
  CHECK(s9.factor_of(4) == 1);
}

TEST_CASE("spec validation errors") {
  std::vector<ItemInfo> items{{"a", 3}, {"b", 3}};
  CHECK_THROWS_AS(build_model_spec(items, {{"f", {"a"}}}), SpecError);
  CHECK_THROWS_AS(build_model_spec(items, {{"f", {"a", "b"}}, {"g", {"b"}}}), SpecError);
  CHECK_THROWS_AS(build_model_spec(items, {{"f", {"a", "b", "c"}}}), SpecError);
  CHECK_THROWS_AS(build_model_spec(items, {{"f", {"a", "b"}}, {"g", {}}}), SpecError);
  CHECK_THROWS_AS(build_model_spec({{"a", 1}}, {{"f", {"a"}}}), SpecError);
  CHECK_NOTHROW(build_model_spec(items, {{"f", {"a", "b"}}}));
}

TEST_CASE("parameter addresses") {
  auto spec = clustered_spec({2, 3}, 4);
  const int p = 5, m = 2;
  CHECK(total_parameter_count(spec) == p + p + 3 * p + p + m + m * (m + 1) / 2);
  auto params = ParameterSet::defaults(spec);
  CHECK_NOTHROW(validate_parameters(params, spec));
  for (const auto& a : parameter_addresses(spec)) {
    params.set(a, 0.25);
    CHECK(params.get(a) == 0.25);
  }
  CHECK(params.phi(0, 1) == params.phi(1, 0));
}

TEST_CASE("validate_parameters rejects bad values") {
  auto spec = single_factor_spec(3, 4);
  auto params = ParameterSet::defaults(spec);
  auto bad = params;
  bad.thresholds[1](2) = bad.thresholds[1](1);
  CHECK_THROWS_AS(validate_parameters(bad, spec), DomainError);
  bad = params;
  bad.theta(0) = 0.0;
  CHECK_THROWS_AS(validate_parameters(bad, spec), DomainError);
  bad = params;
  bad.phi(0, 0) = -1.0;
  CHECK_THROWS_AS(validate_parameters(bad, spec), DomainError);
}

TEST_CASE("integer constraints for seven four-category items") {
  auto spec = single_factor_spec(7, 4);
  auto cs = make_constraints(spec, Regime::Integer);
  CHECK(cs.count() == 2 * (7 + 1));
  for (int j = 0; j < 7; ++j) {
    CHECK(has_fix(cs, addr::threshold(j, 0), 1.5));
    CHECK(has_fix(cs, addr::threshold(j, 2), 3.5));
  }
  REQUIRE(cs.sums.size() == 2);

  auto params = ParameterSet::defaults(spec);
  params.lambda.col(0).setConstant(1.0);
  for (int j = 0; j < 7; ++j) {
    params.thresholds[j] << 1.5, 2.5, 3.5;
    params.nu(j) = j - 3.0;
  }
  params.kappa(0) = 2.5;
  params.phi(0, 0) = 0.4;
  params.theta.setConstant(0.3);
  CHECK(max_constraint_violation(cs, params, spec) == doctest::Approx(0.0));
  params.nu(0) += 0.1;
  CHECK(max_constraint_violation(cs, params, spec) == doctest::Approx(0.1));
}

TEST_CASE("integer constraints for five-category items") {
  auto spec = single_factor_spec(5, 5);
  auto cs = make_constraints(spec, Regime::Integer);
  for (int j = 0; j < 5; ++j) {
    CHECK(has_fix(cs, addr::threshold(j, 0), 1.5));
    CHECK(has_fix(cs, addr::threshold(j, 3), 4.5));
  }
}

TEST_CASE("minimal regimes have 2(p + m) constraints") {
  for (auto sizes : {std::vector<int>{3}, std::vector<int>{6}, std::vector<int>{3, 3, 3},
                     std::vector<int>{2, 4}}) {
    auto spec = clustered_spec(sizes, 4);
    const auto expected = static_cast<std::size_t>(2 * (spec.item_count() + spec.factor_count()));
    for (auto r : minimal_regimes())
      CHECK_MESSAGE(make_constraints(spec, r).count() == expected, to_string(r));
  }
}

TEST_CASE("mixed-category thresholds") {
  auto a = mixed_category_thresholds(3, 50);
  CHECK(std::round(a.low * 100) / 100 == doctest::Approx(17.17));
  CHECK(std::round(a.high * 100) / 100 == doctest::Approx(33.83));
  for (int K = 3; K <= 10; ++K) {
    auto b = mixed_category_thresholds(K, K);
    CHECK(b.low == 1.5);
    CHECK(b.high == K - 0.5);
    CHECK_FALSE(b.fix_intercept);
  }
  auto binary = mixed_category_thresholds(2, 4);
  CHECK(binary.low == 2.5);
  CHECK(binary.fix_intercept);
  CHECK_THROWS_AS(mixed_category_thresholds(5, 4), DomainError);
  CHECK_THROWS_AS(mixed_category_thresholds(1, 4), DomainError);
}

TEST_CASE("binary items under integer constraints need the binary rule") {
  auto spec = build_model_spec({{"a", 2}, {"b", 4}, {"c", 4}}, {{"f", {"a", "b", "c"}}});
  CHECK_THROWS_AS(make_constraints(spec, Regime::Integer), SpecError);
  ConstraintOptions opt;
  opt.binary_rule = true;
  auto cs = make_constraints(spec, Regime::Integer, opt);
  CHECK(has_fix(cs, addr::threshold(0, 0), 2.5));
  CHECK(has_fix(cs, addr::intercept(0), 0.0));
}

TEST_CASE("geometric mean regime is gated") {
  auto spec = single_factor_spec(4, 4);
  CHECK_THROWS_AS(make_constraints(spec, Regime::GeometricMean), SpecError);
  ConstraintOptions opt;
  opt.allow_experimental = true;
  auto cs = make_constraints(spec, Regime::GeometricMean, opt);
  CHECK(cs.has_nonlinear());
}

TEST_CASE("regime names round trip") {
  for (auto r : {Regime::Traditional, Regime::UnitVariance, Regime::ReferenceIndicator,
                 Regime::Delta, Regime::Integer, Regime::SumscoreRasch,
                 Regime::GeometricMean})
    CHECK(parse_regime(to_string(r)) == r);
  CHECK_THROWS_AS(parse_regime("nonsense"), SpecError);
}

TEST_CASE("apply_fixes writes values and the mask") {
  auto spec = single_factor_spec(3, 4);
  auto cs = make_constraints(spec, Regime::Traditional);
  auto params = ParameterSet::defaults(spec);
  params.nu.setConstant(2.0);
  params.fixed.insert(addr::loading(0, 0));
  apply_fixes(params, cs);
  CHECK(params.nu.isZero());
  CHECK_FALSE(params.is_fixed(addr::loading(0, 0)));
  CHECK(params.is_fixed(addr::residual(2)));
}

TEST_CASE("transform validation") {
  auto spec = single_factor_spec(3, 4);
  auto t = TransformSet::identity(spec);
  CHECK_NOTHROW(t.validate(spec));
  t.Delta(1) = 0.0;
  CHECK_THROWS_AS(t.validate(spec), DomainError);
  t = TransformSet::identity(spec);
  t.D(0) = std::nan("");
  CHECK_THROWS_AS(t.validate(spec), DomainError);
}

TEST_CASE("fingerprint distinguishes specs") {
  CHECK(single_factor_spec(3, 4).fingerprint() == single_factor_spec(3, 4).fingerprint());
  CHECK(single_factor_spec(3, 4).fingerprint() != single_factor_spec(3, 5).fingerprint());
  CHECK(clustered_spec({2, 2}, 4).fingerprint() != single_factor_spec(4, 4).fingerprint());
}
