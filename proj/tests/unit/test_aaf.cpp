#include <random>
#include <sstream>

#include "doctest.h"
#include "sift/aaf/framework.hpp"
#include "sift/aaf/solver.hpp"
#include "sift/errors.hpp"
#include "support/aaf_oracle.hpp"

using namespace sift;
using namespace sift::aaf;

namespace {

ArgumentId A(std::uint32_t v) { return ArgumentId{v}; }

Framework make(std::uint32_t n, std::initializer_list<std::pair<std::uint32_t, std::uint32_t>> attacks) {
  Framework f;
  for (std::uint32_t i = 0; i < n; ++i) f.add_argument(i);
  for (auto [a, b] : attacks) f.add_attack(A(a), A(b));
  return f;
}

void check_against_oracle(const Framework& f) {
  const auto naive = testing::naive_semantics(f);
  Solver solver(f);
  const auto preferred = solver.preferred_extensions();
  REQUIRE(preferred == naive.preferred);
  for (std::uint32_t a = 0; a < f.size(); ++a) {
    CHECK(solver.credulous(A(a)) == naive.credulous[a]);
    CHECK(solver.skeptical(A(a)) == naive.skeptical[a]);
  }
}

}  // namespace

TEST_CASE("conflict-freeness") {
  const auto f = make(2, {{0, 1}});
  const ArgumentId x[] = {A(0)};
  const ArgumentId xy[] = {A(0), A(1)};
  CHECK(is_conflict_free(f, x));
  CHECK_FALSE(is_conflict_free(f, xy));
  CHECK(is_conflict_free(f, {}));
  const ArgumentId foreign[] = {A(7)};
  CHECK_THROWS_AS(is_conflict_free(f, foreign), ContractError);
}

TEST_CASE("admissibility") {
  const auto f = make(3, {{0, 1}, {1, 0}, {1, 2}});
  const ArgumentId x[] = {A(0)};
  const ArgumentId z[] = {A(2)};
  const ArgumentId xz[] = {A(0), A(2)};
  CHECK(is_admissible(f, x));
  CHECK_FALSE(is_admissible(f, z));
  CHECK(is_admissible(f, xz));
  CHECK(is_admissible(f, {}));
}

TEST_CASE("preferred extensions of textbook frameworks") {
  SUBCASE("mutual attack") {
    const auto f = make(2, {{0, 1}, {1, 0}});
    Solver s(f);
    CHECK(s.preferred_extensions() == std::vector<ArgumentSet>{{A(0)}, {A(1)}});
    CHECK(s.credulous(A(0)));
    CHECK(s.credulous(A(1)));
    CHECK_FALSE(s.skeptical(A(0)));
    CHECK_FALSE(s.skeptical(A(1)));
  }
  SUBCASE("self attack") {
    const auto f = make(1, {{0, 0}});
    Solver s(f);
    CHECK(s.preferred_extensions() == std::vector<ArgumentSet>{{}});
    CHECK_FALSE(s.credulous(A(0)));
  }
  SUBCASE("empty framework") {
    Framework f;
    CHECK(Solver(f).preferred_extensions() == std::vector<ArgumentSet>{{}});
  }
  SUBCASE("unattacked argument") {
    const auto f = make(1, {});
    Solver s(f);
    CHECK(s.skeptical(A(0)));
  }
  SUBCASE("one-way attack") {
    const auto f = make(2, {{0, 1}});
    CHECK_FALSE(Solver(f).credulous(A(1)));
  }
  SUBCASE("odd cycle") {
    const auto f = make(3, {{0, 1}, {1, 2}, {2, 0}});
    Solver s(f);
    CHECK(s.preferred_extensions() == std::vector<ArgumentSet>{{}});
  }
}

TEST_CASE("every framework on up to three arguments matches the power-set oracle") {
  for (std::uint32_t n = 0; n <= 3; ++n)
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << (n * n)); ++bits) check_against_oracle(testing::framework_from_bits(n, bits));
}

TEST_CASE("random frameworks match the power-set oracle") {
  std::mt19937_64 rng(20261016);
  for (int i = 0; i < 300; ++i) check_against_oracle(testing::random_framework(rng, 12));
}

TEST_CASE("returned preferred extensions are admissible and pairwise incomparable") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto f = testing::random_framework(rng, 10);
    const auto prefs = Solver(f).preferred_extensions();
    REQUIRE_FALSE(prefs.empty());
    for (const auto& e : prefs) {
      CHECK(is_admissible(f, e));
      for (const auto& o : prefs)
        if (&o != &e) CHECK_FALSE(std::includes(o.begin(), o.end(), e.begin(), e.end()));
    }
  }
}

TEST_CASE("find_admissible honours exemptions") {
  // 1 attacks 0, 2 attacks 1's only defender... keep it small: 1 -> 0, nobody attacks 1.
  const auto f = make(2, {{1, 0}});
  Solver s(f);
  const ArgumentId seed[] = {A(0)};
  const ArgumentId exempt[] = {A(1)};
  CHECK_FALSE(s.find_admissible(seed).has_value());
  const auto ext = s.find_admissible(seed, exempt);
  REQUIRE(ext.has_value());
  CHECK(*ext == ArgumentSet{A(0)});
}

TEST_CASE("node budget surfaces as an exception") {
  std::mt19937_64 rng(9);
  Framework f;
  for (std::uint32_t i = 0; i < 40; ++i) f.add_argument();
  for (std::uint32_t i = 0; i < 40; i += 2) f.add_mutual_attack(A(i), A(i + 1));
  Solver s(f, SolverOptions{.node_budget = 50});
  CHECK_THROWS_AS(s.preferred_extensions(), BudgetExceeded);
}

TEST_CASE("framework truncation restores the earlier graph") {
  auto f = make(3, {{0, 1}});
  const auto before = f;
  const auto mark = f.mark();
  const auto d = f.add_argument(9);
  f.add_attack(d, A(0));
  f.add_attack(A(2), A(1));
  f.truncate(mark);
  CHECK(f == before);
  CHECK(f.attackers(A(1)).size() == 1);
  CHECK_THROWS_AS(f.truncate(Framework::Mark{10, 0}), ContractError);
}

TEST_CASE("duplicate attacks are ignored") {
  auto f = make(2, {});
  CHECK(f.add_attack(A(0), A(1)));
  CHECK_FALSE(f.add_attack(A(0), A(1)));
  CHECK(f.num_attacks() == 1);
}

TEST_CASE("debug dump round trip") {
  std::mt19937_64 rng(3);
  const auto f = testing::random_framework(rng, 12);
  std::stringstream ss;
  write_dump(ss, f);
  std::istringstream in(ss.str());
  CHECK(read_dump(in) == f);
  std::istringstream bad("arg 0 0\natt 0 5\n");
  CHECK_THROWS_AS(read_dump(bad), ParseError);
}

TEST_CASE("determinism of extension sets") {
  std::mt19937_64 rng(11);
  const auto f = testing::random_framework(rng, 12);
  auto copy = f;
  CHECK(Solver(f).preferred_extensions() == Solver(copy).preferred_extensions());
}
