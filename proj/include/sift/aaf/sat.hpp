#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sift::aaf {

// Literal: 2*var for the positive, 2*var+1 for the negated variable.
using Lit = std::uint32_t;
constexpr Lit pos(std::uint32_t v) { return 2 * v; }
constexpr Lit neg(std::uint32_t v) { return 2 * v + 1; }
constexpr std::uint32_t var_of(Lit l) { return l >> 1; }

// Conflict-driven clause-learning SAT solver: two watched literals, first
// UIP learning with local minimization, VSIDS branching, phase saving, Luby
// restarts, activity-based learnt clause reduction. Clauses may be added
// between solve calls; learnt clauses survive across calls. Unassigned
// variables default to false.
class SatSolver {
 public:
  enum class Result { Sat, Unsat, Unknown };

  std::uint32_t new_var();
  std::uint32_t num_vars() const { return static_cast<std::uint32_t>(assign_.size()); }
  // Returns false once the clause set is unsatisfiable at the root.
  bool add_clause(std::vector<Lit> lits);
  // Unknown when `budget` decisions plus conflicts are spent.
  Result solve(std::span<const Lit> assumptions, std::size_t budget);
  // Model of the last Sat answer.
  bool model_value(std::uint32_t v) const { return model_[v] > 0; }
  void set_phase(std::uint32_t v, bool value) { phase_[v] = value ? 1 : -1; }
  std::size_t work() const { return work_; }

 private:
  struct Clause {
    std::vector<Lit> lits;
    bool learnt = false;
    bool removed = false;
    double activity = 0.0;
  };
  struct Watch {
    std::uint32_t clause;
    Lit blocker;
  };
  static constexpr std::uint32_t kNoReason = 0xffffffffu;

  int value(Lit l) const {
    const int v = assign_[var_of(l)];
    return (l & 1) ? -v : v;
  }
  std::uint32_t level() const { return static_cast<std::uint32_t>(trail_lim_.size()); }
  void enqueue(Lit l, std::uint32_t reason);
  std::uint32_t propagate();  // conflicting clause or kNoReason
  void analyze(std::uint32_t conflict, std::vector<Lit>& learnt, std::uint32_t& back_level);
  bool redundant(Lit l) const;
  void backtrack(std::uint32_t lvl);
  std::uint32_t attach(std::vector<Lit> lits, bool learnt);
  void bump_var(std::uint32_t v);
  void bump_clause(Clause& c);
  void reduce_learnts();
  Lit pick_branch();

  // heap of variables ordered by activity
  void heap_insert(std::uint32_t v);
  void heap_up(std::size_t i);
  void heap_down(std::size_t i);
  std::uint32_t heap_pop();
  bool heap_less(std::uint32_t a, std::uint32_t b) const { return activity_[a] > activity_[b]; }

  std::vector<Clause> clauses_;
  std::vector<std::uint32_t> free_slots_;
  std::vector<std::vector<Watch>> watches_;  // by literal that, once false, wakes the clause
  std::vector<std::int8_t> assign_;          // +1 true, -1 false, 0 unassigned
  std::vector<std::int8_t> model_;
  std::vector<std::int8_t> phase_;
  std::vector<std::uint32_t> level_;
  std::vector<std::uint32_t> reason_;
  std::vector<double> activity_;
  std::vector<std::uint8_t> seen_;
  std::vector<Lit> marked_;  // literals flagged in seen_ during analysis
  std::vector<Lit> trail_;
  std::vector<std::size_t> trail_lim_;
  std::size_t qhead_ = 0;
  std::vector<std::uint32_t> heap_;
  std::vector<std::int64_t> heap_pos_;
  double var_inc_ = 1.0;
  double clause_inc_ = 1.0;
  std::size_t num_learnts_ = 0;
  std::size_t num_problem_ = 0;
  std::size_t work_ = 0;
  bool root_unsat_ = false;
};

}  // namespace sift::aaf
