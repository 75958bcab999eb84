#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsmpc/scenario_engine.hpp"

using namespace bsmpc;

namespace {

// Minimal prediction stubs: probabilities matter, trajectories do not.
MultiModalPrediction stub_pred(int sv_id, const std::vector<double>& mus) {
  MultiModalPrediction p;
  p.sv_id = sv_id;
  for (size_t i = 0; i < mus.size(); ++i) {
    PredictionMode m;
    m.id = static_cast<int>(i);
    m.mu = mus[i];
    m.states.resize(2);
    m.cov.resize(2, Mat2::Identity());
    p.modes.push_back(m);
  }
  return p;
}

}  // namespace

TEST_CASE("cartesian product size and probabilities") {
  const auto set = enumerate_scenarios({stub_pred(1, {0.5, 0.3, 0.2}), stub_pred(2, {0.6, 0.4})});
  REQUIRE(set.scenarios.size() == 6);

  double sum = 0.0;
  for (const auto& s : set.scenarios) {
    REQUIRE(s.assignment.size() == 2);
    // factorization: p equals the product of member mode probabilities
    const double mu1 = std::vector<double>{0.5, 0.3, 0.2}[s.mode_of(1)];
    const double mu2 = std::vector<double>{0.6, 0.4}[s.mode_of(2)];
    CHECK(s.p == doctest::Approx(mu1 * mu2).epsilon(1e-15));
    sum += s.p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  // deterministic lexicographic ordering by (sv id, mode id)
  CHECK(set.scenarios[0].mode_of(1) == 0);
  CHECK(set.scenarios[0].mode_of(2) == 0);
  CHECK(set.scenarios[1].mode_of(1) == 0);
  CHECK(set.scenarios[1].mode_of(2) == 1);
  CHECK(set.scenarios[5].mode_of(1) == 2);
  CHECK(set.scenarios[5].mode_of(2) == 1);
}

TEST_CASE("uniform probabilities give 1/6 each") {
  const auto set = enumerate_scenarios(
      {stub_pred(1, {1.0 / 3, 1.0 / 3, 1.0 / 3}), stub_pred(2, {0.5, 0.5})});
  for (const auto& s : set.scenarios) CHECK(s.p == doctest::Approx(1.0 / 6).epsilon(1e-12));
}

TEST_CASE("4 SVs with 2 modes each yields 16 scenarios") {
  std::vector<MultiModalPrediction> preds;
  for (int sv = 1; sv <= 4; ++sv) preds.push_back(stub_pred(sv, {0.5, 0.5}));
  const auto set = enumerate_scenarios(preds);
  CHECK(set.scenarios.size() == 16);
}

TEST_CASE("completeness: every mode appears in the right number of scenarios") {
  const auto set = enumerate_scenarios(
      {stub_pred(1, {0.5, 0.5}), stub_pred(2, {0.4, 0.3, 0.3}), stub_pred(3, {1.0, 0.0})});
  // mode m of SV o appears in prod_{o' != o} |modes(o')| scenarios
  std::map<std::pair<int, int>, int> count;
  for (const auto& s : set.scenarios)
    for (const auto& [sv, mode] : s.assignment) count[{sv, mode}]++;
  CHECK(count[{1, 0}] == 6);
  CHECK(count[{1, 1}] == 6);
  CHECK(count[{2, 2}] == 4);
  CHECK(count[{3, 1}] == 6);
}

TEST_CASE("scenario cap raises an instructive error") {
  std::vector<MultiModalPrediction> preds;
  for (int sv = 1; sv <= 9; ++sv) preds.push_back(stub_pred(sv, {0.5, 0.5}));
  CHECK_THROWS_WITH_AS(enumerate_scenarios(preds),
                       doctest::Contains("prune prediction modes"), std::runtime_error);
  CHECK_NOTHROW(enumerate_scenarios(preds, 512));
}

TEST_CASE("empty prediction set yields empty scenario set") {
  CHECK(enumerate_scenarios({}).scenarios.empty());
}

TEST_CASE("scenario_predictions") {
  const auto preds = std::vector<MultiModalPrediction>{stub_pred(1, {0.7, 0.3})};
  const auto set = enumerate_scenarios(preds);

  SUBCASE("lookup returns the referenced mode") {
    const auto map = scenario_predictions(set.scenarios[1], preds);
    REQUIRE(map.size() == 1);
    CHECK(map.at(1)->id == 1);
    CHECK(map.at(1)->mu == doctest::Approx(0.3));
  }

  SUBCASE("dangling references throw") {
    Scenario bad;
    bad.assignment = {{1, 7}};
    CHECK_THROWS_AS(scenario_predictions(bad, preds), std::invalid_argument);
    Scenario bad_sv;
    bad_sv.assignment = {{9, 0}};
    CHECK_THROWS_AS(scenario_predictions(bad_sv, preds), std::invalid_argument);
  }

  SUBCASE("single SV single mode is the unique map") {
    const auto one = std::vector<MultiModalPrediction>{stub_pred(5, {1.0})};
    const auto s = enumerate_scenarios(one);
    REQUIRE(s.scenarios.size() == 1);
    CHECK(s.scenarios[0].p == doctest::Approx(1.0));
    CHECK(scenario_predictions(s.scenarios[0], one).at(5)->id == 0);
  }
}
