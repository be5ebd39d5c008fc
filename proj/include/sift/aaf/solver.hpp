#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "sift/aaf/framework.hpp"
#include "sift/aaf/sat.hpp"

namespace sift::aaf {

bool is_conflict_free(const Framework& f, std::span<const ArgumentId> s);
// Conflict-free and every attacker of a member is attacked by some member.
bool is_admissible(const Framework& f, std::span<const ArgumentId> s);

struct SolverOptions {
  std::size_t node_budget = 10'000'000;
};

// Acceptance queries under preferred semantics.
//
// Admissibility questions go to a CDCL SAT encoding: x_a means a is in the
// set, d_b means some member attacks b. Clauses: not both ends of an
// attack; x_a implies d_b for every attacker b of a; d_b implies one of
// b's attackers. One encoding is kept per solver, so clauses learnt by one
// query speed up the next. Complete extensions are enumerated by a
// labelling search (committing an argument IN defeats its targets, forbids
// its attackers and turns undefeated attackers into obligations).
// Each decision or conflict counts against the per-query node budget;
// exhausting it throws BudgetExceeded instead of returning a guess.
//
// The solver borrows the framework; it must outlive the solver and stay
// unmodified while queries run.
class Solver {
 public:
  explicit Solver(const Framework& f, SolverOptions opts = {});

  // Some admissible set containing every seed argument, or nullopt.
  // Arguments in `exempt` never become obligations, i.e. their attacks on
  // the set are ignored (used to isolate individual attackers when
  // explaining a rejection). `preferred_first` lists arguments to try
  // first when branching.
  std::optional<ArgumentSet> find_admissible(std::span<const ArgumentId> seed,
                                             std::span<const ArgumentId> exempt = {},
                                             std::span<const ArgumentId> preferred_first = {});
  // Some admissible set containing at least one of `candidates`.
  std::optional<ArgumentSet> find_admissible_any(std::span<const ArgumentId> candidates);

  // Member of at least one preferred extension, i.e. of some admissible set.
  bool credulous(ArgumentId a);
  // Member of every preferred extension.
  bool skeptical(ArgumentId a);

  // All complete extensions (each admissible and containing every argument
  // it defends), canonically ordered.
  std::vector<ArgumentSet> complete_extensions();
  // The subset-maximal complete extensions; always non-empty.
  std::vector<ArgumentSet> preferred_extensions();

  std::size_t nodes() const { return nodes_; }

 private:
  enum class Change : std::uint8_t { In, Defeated, Threat, Banned };
  struct TrailEntry {
    Change change;
    std::uint32_t arg;
  };

  void reset(std::span<const ArgumentId> exempt, std::span<const ArgumentId> preferred_first);
  bool excluded(std::uint32_t a) const {
    return in_[a] || defeated_[a] > 0 || threat_[a] > 0 || banned_[a] > 0 || self_[a];
  }
  bool set_in(std::uint32_t a);
  void ban(std::uint32_t a);
  void undo_to(std::size_t mark);
  void open_add(std::uint32_t a);
  void open_remove(std::uint32_t a);
  void tick();

  // Unit propagation. Returns false on a dead obligation.
  bool propagate();
  // Open obligation with the fewest available defenders (ties by id).
  std::optional<std::uint32_t> pick_obligation(std::size_t& available) const;
  std::vector<std::uint32_t> defenders(std::uint32_t obligation) const;

  std::unique_ptr<SatSolver> encode(std::span<const ArgumentId> exempt) const;
  SatSolver& base();
  std::optional<ArgumentSet> run(SatSolver& sat, std::span<const Lit> assumptions);
  // Grows admissible `s` to a preferred extension.
  ArgumentSet maximize(SatSolver& sat, ArgumentSet s);
  // Requires any future model to leave `ext`.
  void block_subsets(SatSolver& sat, const ArgumentSet& ext) const;
  void search_complete(std::vector<ArgumentSet>& out);
  ArgumentSet current_in() const;

  const Framework& f_;
  SolverOptions opts_;
  std::size_t nodes_ = 0;
  std::unique_ptr<SatSolver> sat_;

  std::vector<std::uint8_t> self_;
  std::vector<std::uint8_t> in_;
  std::vector<std::uint32_t> defeated_;
  std::vector<std::uint32_t> threat_;
  std::vector<std::uint32_t> banned_;
  std::vector<std::uint8_t> exempt_;
  std::vector<std::uint8_t> priority_;
  std::vector<TrailEntry> trail_;

  std::vector<std::uint32_t> open_;      // open obligations
  std::vector<std::int64_t> open_pos_;   // position in open_ or -1
  std::vector<std::uint32_t> in_list_;   // IN arguments in commit order
};

}  // namespace sift::aaf
