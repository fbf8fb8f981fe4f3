#include <doctest.h>

#include <algorithm>

#include "ordcfa/identification.hpp"

using namespace ordcfa;

namespace {

ConstraintSet without_fix(ConstraintSet cs, const ModelSpec& spec, int threshold_position) {
  std::erase_if(cs.fixes, [&](const FixConstraint& f) {
    if (f.address.kind != ParamKind::Threshold) return false;
    const int last = spec.threshold_count(f.address.row) - 1;
    return f.address.col == (threshold_position == 0 ? 0 : last);
  });
  return cs;
}

}  // namespace

TEST_CASE("minimal regimes identify the model") {
  for (auto sizes : {std::vector<int>{3}, std::vector<int>{2, 2}}) {
    auto spec = clustered_spec(sizes, 4);
    for (auto r : minimal_regimes()) {
      auto rep = verify_identification(spec, make_constraints(spec, r));
      CHECK_MESSAGE(rep.verdict == IdentificationVerdict::Identifying,
                    to_string(r) << ": " << rep.detail);
      CHECK(rep.count_matches);
      CHECK(rep.jacobian_rank == rep.transform_dimension);
    }
  }
}

TEST_CASE("traditional constraints force the identity transform") {
  auto spec = single_factor_spec(4, 4);
  auto rep = verify_identification(spec, make_constraints(spec, Regime::Traditional));
  CHECK(rep.verdict == IdentificationVerdict::Identifying);
  CHECK_FALSE(rep.witness.has_value());
}

TEST_CASE("dropping an integer threshold fix breaks identification") {
  auto spec = single_factor_spec(3, 4);
  auto full = make_constraints(spec, Regime::Integer);
  for (int pos : {0, 1}) {
    auto cs = without_fix(full, spec, pos);
    CHECK(cs.count() == full.count() - 3);
    auto rep = verify_identification(spec, cs);
    CHECK(rep.verdict == IdentificationVerdict::NotIdentifying);
    CHECK_FALSE(rep.count_matches);
    REQUIRE(rep.witness.has_value());
    CHECK((rep.witness->Delta.array() - 1.0).abs().maxCoeff() > 1e-4);
  }
}

TEST_CASE("an extra free direction is found for a redundant set") {
  auto spec = single_factor_spec(3, 4);
  auto cs = make_constraints(spec, Regime::Traditional);
  std::erase_if(cs.fixes, [](const FixConstraint& f) {
    return f.address.kind == ParamKind::LatentCovariance;
  });
  auto rep = verify_identification(spec, cs);
  CHECK(rep.verdict == IdentificationVerdict::NotIdentifying);
  REQUIRE(rep.witness.has_value());
  CHECK(std::abs(rep.witness->D(0) - 1.0) > 1e-4);
}

TEST_CASE("random traditional parameters satisfy the constraints") {
  auto spec = clustered_spec({3, 3, 3}, 5);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto ps = random_traditional_parameters(spec, seed);
    CHECK_NOTHROW(validate_parameters(ps, spec));
    CHECK(max_constraint_violation(make_constraints(spec, Regime::Traditional), ps, spec) < 1e-14);
    CHECK((ps.lambda.array() >= 0).all());
  }
  CHECK(max_abs_difference(random_traditional_parameters(spec, 4),
                           random_traditional_parameters(spec, 4), spec) == 0.0);
}

TEST_CASE("verdict names") {
  CHECK(to_string(IdentificationVerdict::Identifying) == "identifying");
  CHECK(to_string(IdentificationVerdict::NotIdentifying) == "not identifying");
}
