#include "sift/aaf/solver.hpp"

#include <algorithm>
#include <string>

#include "sift/errors.hpp"

namespace sift::aaf {

namespace {

void check_members(const Framework& f, std::span<const ArgumentId> s) {
  for (auto a : s)
    if (!f.contains(a)) throw ContractError("argument " + std::to_string(a.value) + " is not in the framework");
}

std::vector<std::uint8_t> membership(const Framework& f, std::span<const ArgumentId> s) {
  std::vector<std::uint8_t> in(f.size(), 0);
  for (auto a : s) in[a.value] = 1;
  return in;
}

}  // namespace

bool is_conflict_free(const Framework& f, std::span<const ArgumentId> s) {
  check_members(f, s);
  const auto in = membership(f, s);
  for (auto a : s)
    for (auto t : f.targets(a))
      if (in[t.value]) return false;
  return true;
}

bool is_admissible(const Framework& f, std::span<const ArgumentId> s) {
  if (!is_conflict_free(f, s)) return false;
  const auto in = membership(f, s);
  std::vector<std::uint8_t> hit(f.size(), 0);
  for (auto a : s)
    for (auto t : f.targets(a)) hit[t.value] = 1;
  for (auto a : s)
    for (auto attacker : f.attackers(a))
      if (!hit[attacker.value]) return false;
  return true;
}

Solver::Solver(const Framework& f, SolverOptions opts) : f_(f), opts_(opts) {
  self_.resize(f.size());
  for (std::uint32_t a = 0; a < f.size(); ++a) self_[a] = f.self_attacking(ArgumentId{a}) ? 1 : 0;
}

void Solver::reset(std::span<const ArgumentId> exempt, std::span<const ArgumentId> preferred_first) {
  const auto n = f_.size();
  nodes_ = 0;
  in_.assign(n, 0);
  defeated_.assign(n, 0);
  threat_.assign(n, 0);
  banned_.assign(n, 0);
  exempt_.assign(n, 0);
  priority_.assign(n, 0);
  open_pos_.assign(n, -1);
  open_.clear();
  trail_.clear();
  in_list_.clear();
  for (auto a : exempt) exempt_.at(a.value) = 1;
  for (auto a : preferred_first) priority_.at(a.value) = 1;
}

void Solver::tick() {
  if (++nodes_ > opts_.node_budget)
    throw BudgetExceeded("argumentation search exceeded " + std::to_string(opts_.node_budget) + " nodes");
}

void Solver::open_add(std::uint32_t a) {
  open_pos_[a] = static_cast<std::int64_t>(open_.size());
  open_.push_back(a);
}

void Solver::open_remove(std::uint32_t a) {
  const auto pos = static_cast<std::size_t>(open_pos_[a]);
  const auto last = open_.back();
  open_[pos] = last;
  open_pos_[last] = static_cast<std::int64_t>(pos);
  open_.pop_back();
  open_pos_[a] = -1;
}

bool Solver::set_in(std::uint32_t a) {
  if (excluded(a)) return false;
  in_[a] = 1;
  in_list_.push_back(a);
  trail_.push_back({Change::In, a});
  for (auto t : f_.targets(ArgumentId{a})) {
    const auto z = t.value;
    trail_.push_back({Change::Defeated, z});
    if (++defeated_[z] == 1 && open_pos_[z] >= 0) open_remove(z);
  }
  for (auto s : f_.attackers(ArgumentId{a})) {
    const auto y = s.value;
    trail_.push_back({Change::Threat, y});
    if (++threat_[y] == 1 && defeated_[y] == 0 && !exempt_[y]) open_add(y);
  }
  return true;
}

void Solver::ban(std::uint32_t a) {
  ++banned_[a];
  trail_.push_back({Change::Banned, a});
}

void Solver::undo_to(std::size_t mark) {
  while (trail_.size() > mark) {
    const auto e = trail_.back();
    trail_.pop_back();
    switch (e.change) {
      case Change::In:
        in_[e.arg] = 0;
        in_list_.pop_back();
        break;
      case Change::Defeated:
        if (--defeated_[e.arg] == 0 && threat_[e.arg] > 0 && !exempt_[e.arg]) open_add(e.arg);
        break;
      case Change::Threat:
        if (--threat_[e.arg] == 0 && open_pos_[e.arg] >= 0) open_remove(e.arg);
        break;
      case Change::Banned:
        --banned_[e.arg];
        break;
    }
  }
}

std::optional<std::uint32_t> Solver::pick_obligation(std::size_t& available) const {
  std::optional<std::uint32_t> best;
  available = 0;
  for (auto y : open_) {
    std::size_t count = 0;
    for (auto z : f_.attackers(ArgumentId{y}))
      if (!excluded(z.value)) ++count;
    if (!best || count < available || (count == available && y < *best)) {
      best = y;
      available = count;
      if (count == 0) break;
    }
  }
  return best;
}

std::vector<std::uint32_t> Solver::defenders(std::uint32_t obligation) const {
  std::vector<std::uint32_t> out;
  for (auto z : f_.attackers(ArgumentId{obligation}))
    if (!excluded(z.value)) out.push_back(z.value);
  std::sort(out.begin(), out.end(), [&](std::uint32_t x, std::uint32_t y) {
    if (priority_[x] != priority_[y]) return priority_[x] > priority_[y];
    return x < y;
  });
  return out;
}

bool Solver::propagate() {
  for (;;) {
    std::size_t available = 0;
    auto y = pick_obligation(available);
    if (!y) return true;
    if (available == 0) return false;
    if (available > 1) return true;
    tick();
    const auto forced = defenders(*y).front();
    set_in(forced);
  }
}

ArgumentSet Solver::current_in() const {
  ArgumentSet s;
  s.reserve(in_list_.size());
  for (auto a : in_list_) s.emplace_back(a);
  std::sort(s.begin(), s.end());
  return s;
}

std::unique_ptr<SatSolver> Solver::encode(std::span<const ArgumentId> exempt) const {
  const auto n = static_cast<std::uint32_t>(f_.size());
  auto sat = std::make_unique<SatSolver>();
  for (std::uint32_t v = 0; v < 2 * n; ++v) sat->new_var();
  const auto skip = membership(f_, exempt);
  for (std::uint32_t a = 0; a < n; ++a) {
    for (auto t : f_.targets(ArgumentId{a}))
      if (t.value >= a || !f_.attacks(t, ArgumentId{a})) sat->add_clause({neg(a), neg(t.value)});
    const auto targets = f_.targets(ArgumentId{a});
    if (skip[a] || targets.empty()) continue;
    const auto d = n + a;
    std::vector<Lit> defeat{neg(d)};
    for (auto c : f_.attackers(ArgumentId{a})) defeat.push_back(pos(c.value));
    sat->add_clause(std::move(defeat));
    for (auto t : targets) sat->add_clause({neg(t.value), pos(d)});
  }
  return sat;
}

SatSolver& Solver::base() {
  if (!sat_) sat_ = encode({});
  return *sat_;
}

std::optional<ArgumentSet> Solver::run(SatSolver& sat, std::span<const Lit> assumptions) {
  const auto before = sat.work();
  const auto result = sat.solve(assumptions, opts_.node_budget);
  nodes_ = sat.work() - before;
  if (result == SatSolver::Result::Unknown)
    throw BudgetExceeded("argumentation search exceeded " + std::to_string(opts_.node_budget) + " nodes");
  if (result == SatSolver::Result::Unsat) return std::nullopt;
  ArgumentSet s;
  for (std::uint32_t a = 0; a < f_.size(); ++a)
    if (sat.model_value(a)) s.emplace_back(a);
  return s;
}

std::optional<ArgumentSet> Solver::find_admissible(std::span<const ArgumentId> seed, std::span<const ArgumentId> exempt,
                                                   std::span<const ArgumentId> preferred_first) {
  check_members(f_, seed);
  check_members(f_, exempt);
  check_members(f_, preferred_first);
  std::unique_ptr<SatSolver> local;
  SatSolver& sat = exempt.empty() ? base() : *(local = encode(exempt));
  for (auto a : preferred_first) sat.set_phase(a.value, true);
  std::vector<Lit> assumptions;
  for (auto a : seed) assumptions.push_back(pos(a.value));
  return run(sat, assumptions);
}

std::optional<ArgumentSet> Solver::find_admissible_any(std::span<const ArgumentId> candidates) {
  check_members(f_, candidates);
  if (candidates.empty()) return std::nullopt;
  auto& sat = base();
  const auto selector = sat.new_var();
  std::vector<Lit> clause{neg(selector)};
  for (auto a : candidates) clause.push_back(pos(a.value));
  sat.add_clause(std::move(clause));
  const Lit assume[] = {pos(selector)};
  auto out = run(sat, assume);
  sat.add_clause({neg(selector)});
  return out;
}

bool Solver::credulous(ArgumentId a) {
  const ArgumentId seed[] = {a};
  return find_admissible(seed).has_value();
}

ArgumentSet Solver::maximize(SatSolver& sat, ArgumentSet s) {
  for (;;) {
    const auto selector = sat.new_var();
    std::vector<Lit> assumptions{pos(selector)};
    for (auto a : s) assumptions.push_back(pos(a.value));
    const auto in = membership(f_, s);
    std::vector<Lit> grow{neg(selector)};
    for (std::uint32_t x = 0; x < f_.size(); ++x)
      if (!in[x]) grow.push_back(pos(x));
    sat.add_clause(std::move(grow));
    auto bigger = run(sat, assumptions);
    sat.add_clause({neg(selector)});
    if (!bigger) return s;
    s = std::move(*bigger);
  }
}

void Solver::block_subsets(SatSolver& sat, const ArgumentSet& ext) const {
  const auto in = membership(f_, ext);
  std::vector<Lit> leave;
  for (std::uint32_t x = 0; x < f_.size(); ++x)
    if (!in[x]) leave.push_back(pos(x));
  sat.add_clause(std::move(leave));
}

bool Solver::skeptical(ArgumentId a) {
  check_members(f_, std::span<const ArgumentId>(&a, 1));
  if (!credulous(a)) return false;
  // A credulous rival shares no preferred extension with `a`.
  for (auto b : f_.attackers(a))
    if (b != a && credulous(b)) return false;
  for (auto b : f_.targets(a))
    if (b != a && credulous(b)) return false;
  // Otherwise look for an admissible set without `a` outside every
  // preferred extension found so far; a maximal one lacking `a` refutes.
  auto sat = encode({});
  const Lit without[] = {neg(a.value)};
  while (auto s = run(*sat, without)) {
    auto ext = maximize(*sat, std::move(*s));
    if (!std::binary_search(ext.begin(), ext.end(), a)) return false;
    block_subsets(*sat, ext);
  }
  return true;
}

void Solver::search_complete(std::vector<ArgumentSet>& out) {
  if (!propagate()) return;
  std::size_t available = 0;
  if (auto y = pick_obligation(available)) {
    const auto mark = trail_.size();
    for (auto z : defenders(*y)) {
      const auto branch = trail_.size();
      tick();
      if (set_in(z)) search_complete(out);
      undo_to(branch);
      ban(z);
    }
    undo_to(mark);
    return;
  }
  // The IN set is admissible here: everything it defends must join it, and
  // a banned argument that is defended rules the branch out.
  const auto n = static_cast<std::uint32_t>(f_.size());
  for (bool changed = true; changed;) {
    changed = false;
    for (std::uint32_t x = 0; x < n; ++x) {
      if (in_[x]) continue;
      bool defended = true;
      for (auto s : f_.attackers(ArgumentId{x}))
        if (defeated_[s.value] == 0) {
          defended = false;
          break;
        }
      if (!defended) continue;
      if (banned_[x] > 0) return;
      tick();
      if (set_in(x)) changed = true;
    }
  }
  std::optional<std::uint32_t> pick;
  for (std::uint32_t x = 0; x < n && !pick; ++x)
    if (!excluded(x)) pick = x;
  if (!pick) {
    out.push_back(current_in());
    return;
  }
  const auto mark = trail_.size();
  tick();
  if (set_in(*pick)) search_complete(out);
  undo_to(mark);
  ban(*pick);
  search_complete(out);
  undo_to(mark);
}

std::vector<ArgumentSet> Solver::complete_extensions() {
  reset({}, {});
  std::vector<ArgumentSet> out;
  search_complete(out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ArgumentSet> Solver::preferred_extensions() {
  auto sat = encode({});
  std::vector<ArgumentSet> out;
  while (auto s = run(*sat, {})) {
    out.push_back(maximize(*sat, std::move(*s)));
    block_subsets(*sat, out.back());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace sift::aaf
