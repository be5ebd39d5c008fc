#include "sift/core/validity.hpp"

#include <algorithm>
#include <map>
#include <utility>

#include "sift/errors.hpp"

namespace sift {

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::Mapping:
      return "mapping";
    case ViolationKind::Start:
      return "start";
    case ViolationKind::InstanceStructure:
      return "instance_structure";
    case ViolationKind::InstanceOrder:
      return "instance_order";
    case ViolationKind::Must:
      return "must";
    case ViolationKind::Not:
      return "not";
    case ViolationKind::Precedence:
      return "precedence";
    case ViolationKind::NegPrecedence:
      return "neg_precedence";
    case ViolationKind::Unclosed:
      return "unclosed";
  }
  return "?";
}

namespace {

struct Step {
  std::size_t idx;
  StepType step;
};

bool contains(const std::vector<ActivityId>& v, ActivityId a) { return std::find(v.begin(), v.end(), a) != v.end(); }

}  // namespace

Verdict validate_interpretation(const Trace& trace, const Interpretation& interp, const DomainModel& model) {
  const std::size_t n = trace.size();
  if (interp.size() != n) throw ContractError("interpretation must cover every event of the trace");
  Verdict verdict;
  auto flag = [&](ViolationKind k, std::vector<std::size_t> idx, std::optional<std::size_t> q = std::nullopt) {
    verdict.violations.push_back(Violation{k, std::move(idx), q});
  };

  // V1
  for (std::size_t i = 0; i < n; ++i) {
    const auto& as = interp[i];
    if (!model.mapping.contains(trace.events[i].type, as.activity, as.step)) flag(ViolationKind::Mapping, {i + 1});
  }

  // V2
  if (n > 0) {
    const auto& first = interp[0];
    const bool ok = first.activity.value < model.num_activities() && model.process.is_start(first.activity) &&
                    is_opening(first.step) && first.instance == 1;
    if (!ok) flag(ViolationKind::Start, {1});
  }

  // Per-instance step lists, in trace order.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<Step>> instances;
  for (std::size_t i = 0; i < n; ++i) instances[{interp[i].activity.value, interp[i].instance}].push_back({i + 1, interp[i].step});

  // V3
  for (const auto& [key, steps] : instances) {
    std::vector<std::size_t> openings, closings;
    for (const auto& s : steps) {
      if (is_opening(s.step)) openings.push_back(s.idx);
      if (is_closing(s.step)) closings.push_back(s.idx);
    }
    if (openings.size() > 1) flag(ViolationKind::InstanceStructure, openings);
    if (closings.size() > 1) flag(ViolationKind::InstanceStructure, closings);
    for (const auto& s : steps) {
      if (is_opening(s.step)) continue;
      // a non-opening step needs an opening of the same instance strictly before it
      const bool started = std::any_of(openings.begin(), openings.end(), [&](std::size_t o) { return o < s.idx; });
      if (!started) flag(ViolationKind::InstanceStructure, {s.idx});
    }
    if (!closings.empty()) {
      const auto close = closings.front();
      for (const auto& s : steps)
        if (s.idx > close) flag(ViolationKind::InstanceStructure, {close, s.idx});
    }
  }

  // V4
  for (const auto& [key, steps] : instances) {
    const auto [a, j] = key;
    for (const auto& s : steps) {
      if (!is_opening(s.step)) continue;
      const auto& cap = model.process.max_inst.at(a);
      if (j == 0 || (cap && j > *cap)) {
        flag(ViolationKind::InstanceOrder, {s.idx});
        continue;
      }
      if (j == 1) continue;
      auto prev = instances.find({a, j - 1});
      bool ok = false;
      if (prev != instances.end())
        for (const auto& p : prev->second)
          if (is_opening(p.step) && p.idx < s.idx) ok = true;
      if (!ok) flag(ViolationKind::InstanceOrder, {s.idx});
    }
    for (const auto& s : steps) {
      const auto& cap = model.process.max_inst.at(a);
      if (!is_opening(s.step) && (j == 0 || (cap && j > *cap))) flag(ViolationKind::InstanceOrder, {s.idx});
    }
  }

  // V5-V8
  const auto& constraints = model.process.constraints;
  for (std::size_t q = 0; q < constraints.size(); ++q) {
    const auto& c = constraints[q];
    switch (c.kind) {
      case ConstraintKind::Must:
        for (std::size_t i = 1; i <= n; ++i) {
          const auto& as = interp[i - 1];
          if (as.activity != c.lhs.front() || !is_closing(as.step)) continue;
          const bool decidable = trace.finalized || (c.window && i + *c.window <= n);
          if (!decidable) continue;
          bool met = false;
          for (std::size_t m = i + 1; m <= n && c.in_window_after(i, m); ++m)
            if (is_opening(interp[m - 1].step) && contains(c.rhs, interp[m - 1].activity)) met = true;
          if (!met) flag(ViolationKind::Must, {i}, q);
        }
        break;
      case ConstraintKind::Not:
        for (std::size_t i = 1; i <= n; ++i) {
          const auto& as = interp[i - 1];
          if (as.activity != c.lhs.front() || !is_closing(as.step)) continue;
          for (std::size_t m = i + 1; m <= n && c.in_window_after(i, m); ++m)
            if (is_opening(interp[m - 1].step) && interp[m - 1].activity == c.rhs.front())
              flag(ViolationKind::Not, {i, m}, q);
        }
        break;
      case ConstraintKind::Precedence:
        for (std::size_t i = 1; i <= n; ++i) {
          const auto& as = interp[i - 1];
          if (as.activity != c.rhs.front() || !is_opening(as.step)) continue;
          bool met = false;
          for (std::size_t m = 1; m < i; ++m)
            if (c.in_window_before(m, i) && is_closing(interp[m - 1].step) && contains(c.lhs, interp[m - 1].activity))
              met = true;
          if (!met) flag(ViolationKind::Precedence, {i}, q);
        }
        break;
      case ConstraintKind::NegPrecedence:
        for (std::size_t i = 1; i <= n; ++i) {
          const auto& as = interp[i - 1];
          if (as.activity != c.rhs.front() || !is_opening(as.step)) continue;
          for (std::size_t m = 1; m < i; ++m)
            if (c.in_window_before(m, i) && is_closing(interp[m - 1].step) && interp[m - 1].activity == c.lhs.front())
              flag(ViolationKind::NegPrecedence, {m, i}, q);
        }
        break;
    }
  }

  // V9
  if (trace.finalized) {
    for (const auto& [key, steps] : instances) {
      const bool closed = std::any_of(steps.begin(), steps.end(), [](const Step& s) { return is_closing(s.step); });
      if (closed) continue;
      for (const auto& s : steps)
        if (is_opening(s.step)) flag(ViolationKind::Unclosed, {s.idx});
    }
  }
  return verdict;
}

namespace {

class Enumerator {
 public:
  Enumerator(const Trace& trace, const DomainModel& model, std::size_t budget,
             std::span<const std::vector<ActivityId>> candidates)
      : trace_(trace), model_(model), budget_(budget) {
    prefix_.id = trace.id;
    prefix_.finalized = false;
    options_.resize(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
      for (auto [a, s] : model.mapping.cand_steps(trace.events[i].type)) {
        if (!candidates.empty() && !contains(candidates[i], a)) continue;
        const auto cap = model.process.instance_cap(a, i + 1);
        for (std::uint32_t j = 1; j <= cap; ++j) options_[i].push_back(Assignment{a, s, j});
      }
    }
  }

  EnumerationResult run() {
    if (trace_.size() == 0) {
      result_.interpretations.emplace_back();
      return std::move(result_);
    }
    descend(0);
    return std::move(result_);
  }

 private:
  void descend(std::size_t i) {
    for (const auto& opt : options_[i]) {
      if (result_.overflow) return;
      if (++result_.nodes > budget_) {
        result_.overflow = true;
        return;
      }
      current_.push_back(opt);
      prefix_.events.push_back(trace_.events[i]);
      const bool last = i + 1 == trace_.size();
      prefix_.finalized = last && trace_.finalized;
      if (validate_interpretation(prefix_, current_, model_).valid()) {
        if (last)
          result_.interpretations.push_back(current_);
        else
          descend(i + 1);
      }
      prefix_.events.pop_back();
      current_.pop_back();
    }
  }

  const Trace& trace_;
  const DomainModel& model_;
  std::size_t budget_;
  std::vector<std::vector<Assignment>> options_;
  Trace prefix_;
  Interpretation current_;
  EnumerationResult result_;
};

}  // namespace

EnumerationResult enumerate_valid(const Trace& trace, const DomainModel& model, std::size_t node_budget,
                                  std::span<const std::vector<ActivityId>> candidates) {
  if (!candidates.empty() && candidates.size() != trace.size())
    throw ContractError("candidate restriction must list one set per event");
  return Enumerator(trace, model, node_budget, candidates).run();
}

}  // namespace sift
