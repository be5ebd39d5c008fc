#include "sift/aaf/sat.hpp"

#include <algorithm>
#include <cmath>

namespace sift::aaf {

namespace {

double luby(double y, std::size_t x) {
  std::size_t size = 1, seq = 0;
  while (size < x + 1) {
    ++seq;
    size = 2 * size + 1;
  }
  while (size - 1 != x) {
    size = (size - 1) >> 1;
    --seq;
    x %= size;
  }
  return std::pow(y, static_cast<double>(seq));
}

}  // namespace

std::uint32_t SatSolver::new_var() {
  const auto v = num_vars();
  assign_.push_back(0);
  model_.push_back(0);
  phase_.push_back(-1);
  level_.push_back(0);
  reason_.push_back(kNoReason);
  activity_.push_back(0.0);
  seen_.push_back(0);
  heap_pos_.push_back(-1);
  watches_.emplace_back();
  watches_.emplace_back();
  heap_insert(v);
  return v;
}

std::uint32_t SatSolver::attach(std::vector<Lit> lits, bool learnt) {
  std::uint32_t id;
  if (!free_slots_.empty()) {
    id = free_slots_.back();
    free_slots_.pop_back();
    clauses_[id] = Clause{std::move(lits), learnt, false, 0.0};
  } else {
    id = static_cast<std::uint32_t>(clauses_.size());
    clauses_.push_back(Clause{std::move(lits), learnt, false, 0.0});
  }
  const auto& c = clauses_[id].lits;
  watches_[c[0] ^ 1].push_back({id, c[1]});
  watches_[c[1] ^ 1].push_back({id, c[0]});
  (learnt ? num_learnts_ : num_problem_)++;
  return id;
}

bool SatSolver::add_clause(std::vector<Lit> lits) {
  if (root_unsat_) return false;
  backtrack(0);
  std::sort(lits.begin(), lits.end());
  lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
  std::vector<Lit> kept;
  for (std::size_t i = 0; i < lits.size(); ++i) {
    if (i + 1 < lits.size() && lits[i + 1] == (lits[i] ^ 1)) return true;  // tautology
    const int v = value(lits[i]);
    if (v > 0) return true;
    if (v == 0) kept.push_back(lits[i]);
  }
  if (kept.empty()) return !(root_unsat_ = true);
  if (kept.size() == 1) {
    enqueue(kept[0], kNoReason);
    if (propagate() != kNoReason) root_unsat_ = true;
    return !root_unsat_;
  }
  attach(std::move(kept), false);
  return true;
}

void SatSolver::enqueue(Lit l, std::uint32_t reason) {
  const auto v = var_of(l);
  assign_[v] = (l & 1) ? -1 : 1;
  level_[v] = level();
  reason_[v] = reason;
  trail_.push_back(l);
}

std::uint32_t SatSolver::propagate() {
  while (qhead_ < trail_.size()) {
    const Lit p = trail_[qhead_++];  // p became true; clauses watching ~p wake
    auto& ws = watches_[p];
    std::size_t i = 0, j = 0;
    const Lit false_lit = p ^ 1;
    while (i < ws.size()) {
      const Watch w = ws[i];
      if (value(w.blocker) > 0) {
        ws[j++] = ws[i++];
        continue;
      }
      Clause& c = clauses_[w.clause];
      if (c.removed) {
        ++i;
        continue;
      }
      auto& lits = c.lits;
      if (lits[0] == false_lit) std::swap(lits[0], lits[1]);
      ++i;
      const Lit first = lits[0];
      if (first != w.blocker && value(first) > 0) {
        ws[j++] = {w.clause, first};
        continue;
      }
      bool moved = false;
      for (std::size_t k = 2; k < lits.size(); ++k)
        if (value(lits[k]) >= 0) {
          std::swap(lits[1], lits[k]);
          watches_[lits[1] ^ 1].push_back({w.clause, first});
          moved = true;
          break;
        }
      if (moved) continue;
      ws[j++] = {w.clause, first};
      if (value(first) < 0) {
        while (i < ws.size()) ws[j++] = ws[i++];
        ws.resize(j);
        qhead_ = trail_.size();
        return w.clause;
      }
      enqueue(first, w.clause);
    }
    ws.resize(j);
  }
  return kNoReason;
}

void SatSolver::bump_var(std::uint32_t v) {
  if ((activity_[v] += var_inc_) > 1e100) {
    for (auto& a : activity_) a *= 1e-100;
    var_inc_ *= 1e-100;
  }
  if (heap_pos_[v] >= 0) heap_up(static_cast<std::size_t>(heap_pos_[v]));
}

void SatSolver::bump_clause(Clause& c) {
  if ((c.activity += clause_inc_) > 1e20) {
    for (auto& x : clauses_)
      if (x.learnt) x.activity *= 1e-20;
    clause_inc_ *= 1e-20;
  }
}

bool SatSolver::redundant(Lit l) const {
  const auto r = reason_[var_of(l)];
  if (r == kNoReason) return false;
  for (auto q : clauses_[r].lits)
    if (var_of(q) != var_of(l) && !seen_[var_of(q)] && level_[var_of(q)] > 0) return false;
  return true;
}

void SatSolver::analyze(std::uint32_t conflict, std::vector<Lit>& learnt, std::uint32_t& back_level) {
  learnt.assign(1, 0);
  std::size_t pending = 0;
  Lit p = 0;
  bool have_p = false;
  std::size_t index = trail_.size();
  std::uint32_t cref = conflict;
  do {
    Clause& c = clauses_[cref];
    if (c.learnt) bump_clause(c);
    for (auto q : c.lits) {
      if (have_p && q == p) continue;
      const auto v = var_of(q);
      if (seen_[v] || level_[v] == 0) continue;
      seen_[v] = 1;
      bump_var(v);
      if (level_[v] >= level())
        ++pending;
      else
        learnt.push_back(q);
    }
    while (!seen_[var_of(trail_[--index])]) {
    }
    p = trail_[index];
    have_p = true;
    cref = reason_[var_of(p)];
    seen_[var_of(p)] = 0;
    --pending;
  } while (pending > 0);
  learnt[0] = p ^ 1;

  marked_.assign(learnt.begin() + 1, learnt.end());
  std::size_t keep = 1;
  for (std::size_t k = 1; k < learnt.size(); ++k)
    if (!redundant(learnt[k])) learnt[keep++] = learnt[k];
  learnt.resize(keep);
  for (auto l : marked_) seen_[var_of(l)] = 0;

  back_level = 0;
  if (learnt.size() > 1) {
    std::size_t best = 1;
    for (std::size_t k = 2; k < learnt.size(); ++k)
      if (level_[var_of(learnt[k])] > level_[var_of(learnt[best])]) best = k;
    std::swap(learnt[1], learnt[best]);
    back_level = level_[var_of(learnt[1])];
  }
}

void SatSolver::backtrack(std::uint32_t lvl) {
  if (level() <= lvl) return;
  for (std::size_t i = trail_.size(); i-- > trail_lim_[lvl];) {
    const auto v = var_of(trail_[i]);
    phase_[v] = assign_[v];
    assign_[v] = 0;
    reason_[v] = kNoReason;
    if (heap_pos_[v] < 0) heap_insert(v);
  }
  trail_.resize(trail_lim_[lvl]);
  trail_lim_.resize(lvl);
  qhead_ = trail_.size();
}

void SatSolver::reduce_learnts() {
  std::vector<std::uint32_t> cand;
  for (std::uint32_t i = 0; i < clauses_.size(); ++i) {
    const auto& c = clauses_[i];
    if (!c.learnt || c.removed || c.lits.size() <= 2) continue;
    const auto v = var_of(c.lits[0]);
    if (assign_[v] != 0 && reason_[v] == i) continue;  // locked
    cand.push_back(i);
  }
  std::sort(cand.begin(), cand.end(),
            [&](auto a, auto b) { return clauses_[a].activity < clauses_[b].activity; });
  for (std::size_t k = 0; k < cand.size() / 2; ++k) {
    auto& c = clauses_[cand[k]];
    c.removed = true;
    c.lits.clear();
    c.lits.shrink_to_fit();
    free_slots_.push_back(cand[k]);
    --num_learnts_;
  }
  // drop stale watches
  for (auto& ws : watches_)
    ws.erase(std::remove_if(ws.begin(), ws.end(), [&](const Watch& w) { return clauses_[w.clause].removed; }),
             ws.end());
  for (auto i : free_slots_) clauses_[i].removed = false;
}

Lit SatSolver::pick_branch() {
  while (!heap_.empty()) {
    const auto v = heap_pop();
    if (assign_[v] == 0) return phase_[v] > 0 ? pos(v) : neg(v);
  }
  return 0xffffffffu;
}

SatSolver::Result SatSolver::solve(std::span<const Lit> assumptions, std::size_t budget) {
  if (root_unsat_) return Result::Unsat;
  backtrack(0);
  if (propagate() != kNoReason) {
    root_unsat_ = true;
    return Result::Unsat;
  }
  std::size_t spent = 0, conflicts = 0, restart = 0;
  double restart_limit = 100 * luby(2, restart);
  double max_learnts = std::max<double>(static_cast<double>(num_problem_) / 3.0, 2000.0);
  std::vector<Lit> learnt;
  for (;;) {
    const auto conflict = propagate();
    if (conflict != kNoReason) {
      ++spent;
      ++conflicts;
      ++work_;
      if (level() == 0) {
        root_unsat_ = true;
        return Result::Unsat;
      }
      std::uint32_t back = 0;
      analyze(conflict, learnt, back);
      // An assumption-level conflict: keep assumptions below `back`.
      backtrack(back);
      if (learnt.size() == 1) {
        enqueue(learnt[0], kNoReason);
      } else {
        const auto id = attach(learnt, true);
        bump_clause(clauses_[id]);
        enqueue(learnt[0], id);
      }
      var_inc_ /= 0.95;
      clause_inc_ /= 0.999;
      continue;
    }
    if (spent > budget) {
      backtrack(0);
      return Result::Unknown;
    }
    if (static_cast<double>(conflicts) >= restart_limit) {
      conflicts = 0;
      restart_limit = 100 * luby(2, ++restart);
      backtrack(0);
      continue;
    }
    if (static_cast<double>(num_learnts_) >= max_learnts + static_cast<double>(trail_.size())) {
      reduce_learnts();
      max_learnts *= 1.1;
    }
    Lit next = 0xffffffffu;
    while (level() < assumptions.size()) {
      const Lit a = assumptions[level()];
      const int v = value(a);
      if (v > 0) {
        trail_lim_.push_back(trail_.size());  // dummy level
      } else if (v < 0) {
        backtrack(0);
        return Result::Unsat;
      } else {
        next = a;
        break;
      }
    }
    if (next == 0xffffffffu) {
      next = pick_branch();
      if (next == 0xffffffffu) {
        model_ = assign_;
        backtrack(0);
        return Result::Sat;
      }
    }
    ++spent;
    ++work_;
    trail_lim_.push_back(trail_.size());
    enqueue(next, kNoReason);
  }
}

void SatSolver::heap_insert(std::uint32_t v) {
  heap_pos_[v] = static_cast<std::int64_t>(heap_.size());
  heap_.push_back(v);
  heap_up(heap_.size() - 1);
}

void SatSolver::heap_up(std::size_t i) {
  const auto v = heap_[i];
  while (i > 0) {
    const auto parent = (i - 1) / 2;
    if (!heap_less(v, heap_[parent])) break;
    heap_[i] = heap_[parent];
    heap_pos_[heap_[i]] = static_cast<std::int64_t>(i);
    i = parent;
  }
  heap_[i] = v;
  heap_pos_[v] = static_cast<std::int64_t>(i);
}

void SatSolver::heap_down(std::size_t i) {
  const auto v = heap_[i];
  for (;;) {
    auto child = 2 * i + 1;
    if (child >= heap_.size()) break;
    if (child + 1 < heap_.size() && heap_less(heap_[child + 1], heap_[child])) ++child;
    if (!heap_less(heap_[child], v)) break;
    heap_[i] = heap_[child];
    heap_pos_[heap_[i]] = static_cast<std::int64_t>(i);
    i = child;
  }
  heap_[i] = v;
  heap_pos_[v] = static_cast<std::int64_t>(i);
}

std::uint32_t SatSolver::heap_pop() {
  const auto top = heap_.front();
  heap_pos_[top] = -1;
  const auto last = heap_.back();
  heap_.pop_back();
  if (!heap_.empty()) {
    heap_[0] = last;
    heap_pos_[last] = 0;
    heap_down(0);
  }
  return top;
}

}  // namespace sift::aaf
