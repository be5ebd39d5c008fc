#include <random>

#include "doctest.h"
#include "sift/core/model.hpp"
#include "sift/core/validity.hpp"
#include "sift/errors.hpp"
#include "support/fixtures.hpp"
#include "support/random_models.hpp"

using namespace sift;
using sift::testing::as;

namespace {

// Every (a, s, j) assignment for every event, j <= min(maxInst, index),
// filtered by the validity check: the definition enumerate_valid must meet.
std::vector<Interpretation> brute_force(const Trace& t, const DomainModel& m) {
  std::vector<Interpretation> out;
  Interpretation cur;
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == t.size()) {
      if (validate_interpretation(t, cur, m).valid()) out.push_back(cur);
      return;
    }
    for (std::uint32_t a = 0; a < m.num_activities(); ++a)
      for (auto s : kAllSteps)
        for (std::uint32_t j = 1; j <= m.process.instance_cap(ActivityId{a}, i + 1); ++j) {
          cur.push_back(Assignment{ActivityId{a}, s, j});
          rec(i + 1);
          cur.pop_back();
        }
  };
  rec(0);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("cand_act and cand_steps on the CARE fixtures") {
  const auto m = testing::care();
  const auto ci = m.event_type("CannulaInsertion");
  CHECK(m.mapping.cand_act(ci) == std::vector<ActivityId>{m.activity("A2")});
  CHECK(m.mapping.cand_act(m.event_type("BloodSample")).size() == 3);
  const auto steps = m.mapping.cand_steps(ci);
  REQUIRE(steps.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(steps[i] == std::pair{m.activity("A2"), kAllSteps[i]});

  const auto r = testing::care_restricted();
  const auto bp = r.mapping.cand_steps(r.event_type("BloodPressure"));
  const auto has = [&](StepType s) {
    return std::find(bp.begin(), bp.end(), std::pair{r.activity("A1"), s}) != bp.end();
  };
  CHECK(has(StepType::Last));
  CHECK_FALSE(has(StepType::First));

  TypeLevelMapping empty(2, 2);
  CHECK(empty.cand_act(EventTypeId{0}).empty());
  CHECK(empty.cand_steps(EventTypeId{1}).empty());
  CHECK_THROWS_AS(empty.cand_act(EventTypeId{2}), SchemaError);
  CHECK(m.mapping.max_degree() == 3);
}

TEST_CASE("step names") {
  for (auto s : kAllSteps) CHECK(parse_step(to_string(s)) == s);
  CHECK(parse_step("First&Last") == StepType::FirstAndLast);
  CHECK(parse_step("first_and_last") == StepType::FirstAndLast);
  CHECK_FALSE(parse_step("middle").has_value());
}

TEST_CASE("model parsing errors carry a locus") {
  const std::string base = R"({"activities":["A"],"event_types":["E"],
    "mapping":[{"event":"E","activity":"A","steps":["first&last"]}],
    "start_activities":["A"],"max_instances":{"A":1},)";
  auto parse_err = [&](const std::string& tail) -> std::string {
    try {
      parse_model(base + tail);
    } catch (const ParseError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(parse_err(R"("constraints":[{"kind":"must","lhs":["A"],"rhs":["A"],"window":0}]})").find("window must be >= 1") !=
        std::string::npos);
  CHECK_FALSE(parse_err(R"("constraints":[{"kind":"must","lhs":["Z"],"rhs":["A"]}]})").empty());
  CHECK_NOTHROW(parse_model(base + R"("constraints":[{"kind":"must","lhs":["A"],"rhs":["A"],"window":"inf"}]})"));
  CHECK_THROWS_AS(parse_model(R"({"activities":["A"],"event_types":["E"],"mapping":[],
    "start_activities":[],"max_instances":{"A":1}})"),
                  ParseError);
  CHECK_THROWS_AS(parse_model(R"({"activities":["A"],"event_types":["E"],
    "mapping":[{"event":"E","activity":"A","steps":["first"]},{"event":"E","activity":"A","steps":["first"]}],
    "start_activities":["A"],"max_instances":{"A":1}})"),
                  ParseError);
  CHECK_THROWS_AS(parse_model("{not json"), ParseError);
}

TEST_CASE("canonical serialization round trip") {
  const auto m = testing::care_restricted();
  const auto text = serialize_model(m);
  const auto again = parse_model(text);
  CHECK(again == m);
  CHECK(serialize_model(again) == text);
  CHECK(again.mapping.cand_act(again.event_type("CannulaInsertion")) == std::vector<ActivityId>{again.activity("A2")});

  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    const auto r = testing::random_model(rng);
    const auto s = serialize_model(r);
    CHECK(serialize_model(parse_model(s)) == s);
    CHECK(parse_model(s) == r);
  }
}

TEST_CASE("Example 1 interpretations under the restricted model") {
  const auto m = testing::care_restricted();
  const auto t = testing::example_trace(m);
  const Interpretation i2 = {as(m, "A1", StepType::First), as(m, "A1", StepType::Last), as(m, "A2", StepType::First),
                             as(m, "A2", StepType::Last)};
  CHECK(validate_interpretation(t, i2, m).valid());
  const Interpretation i1 = {as(m, "A1", StepType::First), as(m, "A1", StepType::Intermediate),
                             as(m, "A1", StepType::Last), as(m, "A2", StepType::FirstAndLast)};
  const auto v = validate_interpretation(t, i1, m);
  REQUIRE(v.violations.size() == 1);
  CHECK(v.violations[0].kind == ViolationKind::Mapping);
  CHECK(v.violations[0].indices == std::vector<std::size_t>{3});
}

TEST_CASE("empty trace is trivially valid") {
  const auto m = testing::care();
  Trace t;
  CHECK(validate_interpretation(t, {}, m).valid());
  CHECK(enumerate_valid(t, m).interpretations.size() == 1);
  CHECK_THROWS_AS(validate_interpretation(testing::example_trace(m), {}, m), ContractError);
}

TEST_CASE("enumerate_valid on the unconstrained CARE mapping") {
  auto m = testing::care();
  for (std::size_t a = 0; a < 3; ++a) m.process.start_acts[a] = true;
  const auto t = testing::example_trace(m);
  const auto res = enumerate_valid(t, m);
  CHECK_FALSE(res.overflow);
  const Interpretation i1 = {as(m, "A1", StepType::First), as(m, "A1", StepType::Intermediate),
                             as(m, "A1", StepType::Last), as(m, "A2", StepType::FirstAndLast)};
  const Interpretation i2 = {as(m, "A1", StepType::First), as(m, "A1", StepType::Last), as(m, "A2", StepType::First),
                             as(m, "A2", StepType::Last)};
  const auto& all = res.interpretations;
  CHECK(std::find(all.begin(), all.end(), i1) != all.end());
  CHECK(std::find(all.begin(), all.end(), i2) != all.end());
}

TEST_CASE("single BloodSample event") {
  const auto m = testing::care();
  const auto t = make_trace("one", {m.event_type("BloodSample")}, false);
  const auto res = enumerate_valid(t, m);
  REQUIRE(res.interpretations.size() == 2);
  CHECK(res.interpretations[0] == Interpretation{as(m, "A1", StepType::First)});
  CHECK(res.interpretations[1] == Interpretation{as(m, "A1", StepType::FirstAndLast)});

  auto closed = t;
  closed.finalized = true;
  const auto fin = enumerate_valid(closed, m);
  REQUIRE(fin.interpretations.size() == 1);
  CHECK(fin.interpretations[0] == Interpretation{as(m, "A1", StepType::FirstAndLast)});
}

TEST_CASE("events without candidates admit no interpretation") {
  DomainModel m = parse_model(R"({"activities":["A"],"event_types":["E","F"],
    "mapping":[{"event":"E","activity":"A","steps":["first","last"]}],
    "start_activities":["A"],"max_instances":{"A":0}})");
  const auto t = make_trace("x", {m.event_type("E"), m.event_type("F")}, false);
  CHECK(enumerate_valid(t, m).interpretations.empty());
}

TEST_CASE("enumeration overflow is explicit") {
  const auto m = testing::care();
  const auto t = testing::example_trace(m);
  const auto res = enumerate_valid(t, m, 3);
  CHECK(res.overflow);
}

TEST_CASE("enumerate_valid equals filtering the full assignment space") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 120; ++i) {
    const auto m = testing::random_model(rng, {3, 3, 3});
    const auto len = std::uniform_int_distribution<std::size_t>(0, 4)(rng);
    const auto t = testing::random_trace(rng, m, len, i % 2 == 0);
    const auto res = enumerate_valid(t, m);
    REQUIRE_FALSE(res.overflow);
    CHECK(res.interpretations == brute_force(t, m));
  }
}

TEST_CASE("finalization only removes interpretations") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const auto m = testing::random_model(rng);
    const auto t = testing::random_trace(rng, m, 6, true);
    auto open = t;
    open.finalized = false;
    for (const auto& interp : enumerate_valid(t, m).interpretations)
      CHECK(validate_interpretation(open, interp, m).valid());
  }
}

TEST_CASE("violation loci point at events whose reassignment changes the verdict") {
  std::mt19937_64 rng(99);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 300; ++i) {
    const auto m = testing::random_model(rng, {3, 3, 3});
    const auto t = testing::random_trace(rng, m, 4, i % 2 == 0);
    Interpretation interp;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const ActivityId a{std::uniform_int_distribution<std::uint32_t>(0, m.num_activities() - 1)(rng)};
      interp.push_back(Assignment{a, kAllSteps[k % 4], 1});
    }
    const auto verdict = validate_interpretation(t, interp, m);
    for (const auto& v : verdict.violations)
      for (auto idx : v.indices) {
        REQUIRE(idx >= 1);
        REQUIRE(idx <= t.size());
        bool changes = false;
        for (std::uint32_t a = 0; a < m.num_activities() && !changes; ++a)
          for (auto s : kAllSteps)
            for (std::uint32_t j = 1; j <= 3 && !changes; ++j) {
              auto mutated = interp;
              mutated[idx - 1] = Assignment{ActivityId{a}, s, j};
              const auto other = validate_interpretation(t, mutated, m);
              changes = std::find(other.violations.begin(), other.violations.end(), v) == other.violations.end();
            }
        CHECK(changes);
        ++checked;
      }
  }
}
