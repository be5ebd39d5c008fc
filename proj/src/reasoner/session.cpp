#include "sift/reasoner/session.hpp"

#include <algorithm>
#include <atomic>
#include <string>
#include <tuple>

#include "sift/errors.hpp"

namespace sift::reasoner {

using aaf::ArgumentId;

namespace {

std::atomic<std::uint64_t> next_session_uid{1};

auto canonical_key(const InterpretationArgument& a) {
  return std::make_tuple(a.activity.value, static_cast<int>(a.step), a.instance, a.index);
}

bool reason_less(const InvalidityReason& x, const InvalidityReason& y) {
  return std::tie(x.kind, x.indices, x.constraint) < std::tie(y.kind, y.indices, y.constraint);
}

void sort_unique(std::vector<InvalidityReason>& reasons) {
  std::sort(reasons.begin(), reasons.end(), reason_less);
  reasons.erase(std::unique(reasons.begin(), reasons.end()), reasons.end());
}

}  // namespace

bool canonical_less(const InterpretationArgument& x, const InterpretationArgument& y) {
  return canonical_key(x) < canonical_key(y);
}

std::string_view to_string(ArgumentKind k) {
  switch (k) {
    case ArgumentKind::Interpretation:
      return "interpretation";
    case ArgumentKind::NotInterpreted:
      return "not_interpreted";
    case ArgumentKind::NotEnoughExecutions:
      return "not_enough_executions";
    case ArgumentKind::NotStarted:
      return "not_started";
    case ArgumentKind::NotEnded:
      return "not_ended";
    case ArgumentKind::MustViolation:
      return "must_violation";
    case ArgumentKind::PrecedenceViolation:
      return "precedence_violation";
  }
  return "?";
}

std::string_view to_string(ReasonKind k) {
  switch (k) {
    case ReasonKind::Mapping:
      return "mapping_violation";
    case ReasonKind::Start:
      return "start_violation";
    case ReasonKind::InstanceLimit:
      return "instance_limit";
    case ReasonKind::NotCandidate:
      return "not_candidate";
    case ReasonKind::ConflictingInterpretation:
      return "conflicting_interpretation";
    case ReasonKind::Uninterpretable:
      return "uninterpretable";
    case ReasonKind::NotStarted:
      return "not_started";
    case ReasonKind::NotEnoughExecutions:
      return "not_enough_executions";
    case ReasonKind::NotEnded:
      return "not_ended";
    case ReasonKind::UnmetMust:
      return "unmet_must";
    case ReasonKind::UnmetPrecedence:
      return "unmet_precedence";
  }
  return "?";
}

Session::Session(std::shared_ptr<const DomainModel> model, aaf::SolverOptions solver)
    : model_(std::move(model)), solver_options_(solver), uid_(next_session_uid++) {
  if (!model_) throw ContractError("session needs a model");
  openings_by_activity_.resize(model_->num_activities());
  closings_by_activity_.resize(model_->num_activities());
  history_.push_back(next_stamp_++);
}

ArgumentId Session::add(const ArgumentInfo& info) {
  const auto id = framework_.add_argument(static_cast<std::uint32_t>(info.kind));
  infos_.push_back(info);
  return id;
}

void Session::push(std::vector<std::uint32_t>& list, std::uint32_t id) {
  list.push_back(id);
  push_log_.push_back(&list);
}

Session::InstanceLists& Session::lists(ActivityId a, std::uint32_t j) { return instances_[{a.value, j}]; }

void Session::mutated() {
  history_.push_back(next_stamp_++);
  solver_.reset();
  cache_.clear();
}

void Session::check_index(std::size_t index) const {
  if (index < 1 || index > events_.size())
    throw ContractError("event index " + std::to_string(index) + " outside the prefix 1.." +
                        std::to_string(events_.size()));
}

void Session::update_aaf(const Event& e) {
  const auto acts = model_->mapping.cand_act(e.type);
  update_aaf(e, acts);
}

void Session::update_aaf(const Event& e, std::span<const ActivityId> candidates) {
  if (finalized_) throw ContractError("session is finalized");
  const std::size_t c = events_.size() + 1;
  if (e.index != c)
    throw ContractError("expected event index " + std::to_string(c) + ", got " + std::to_string(e.index));
  if (e.type.value >= model_->num_event_types()) throw SchemaError("unknown event type id " + std::to_string(e.type.value));
  std::vector<bool> allowed(model_->num_activities(), false);
  for (auto a : candidates) {
    if (a.value >= allowed.size()) throw SchemaError("unknown activity id " + std::to_string(a.value));
    allowed[a.value] = true;
  }

  mutated();
  const auto& process = model_->process;
  events_.push_back(e);
  per_event_.emplace_back();

  // Interpretation arguments.
  std::vector<ArgumentId> here;
  for (auto [a, s] : model_->mapping.cand_steps(e.type)) {
    if (!allowed[a.value]) continue;
    if (c == 1 && (!process.is_start(a) || !is_opening(s))) continue;
    const auto cap = c == 1 ? 1u : process.instance_cap(a, c);
    for (std::uint32_t j = 1; j <= cap; ++j) here.push_back(add({ArgumentKind::Interpretation, c, a, s, j}));
  }
  auto& slot = per_event_.back();
  slot.ids = here;

  // Totality: a reading of c-1 or c+1 needs some reading of c.
  const auto ni = add({ArgumentKind::NotInterpreted, c});
  slot.not_interpreted = ni;
  framework_.add_attack(ni, ni);
  for (auto x : here) framework_.add_attack(x, ni);
  if (c > 1) {
    const auto& prev = per_event_[c - 2];
    for (auto x : prev.ids) framework_.add_attack(ni, x);
    for (auto x : here) framework_.add_attack(prev.not_interpreted, x);
  }
  const auto ni1 = per_event_.front().not_interpreted;

  for (std::size_t p = 0; p < here.size(); ++p)
    for (std::size_t q = p + 1; q < here.size(); ++q) framework_.add_mutual_attack(here[p], here[q]);

  for (auto x : here) {
    const auto info = infos_[x.value];
    const auto a = info.activity;
    const auto s = info.step;
    const auto j = info.instance;
    auto& same = lists(a, j);
    if (is_opening(s))
      for (auto o : same.openings) framework_.add_mutual_attack(x, ArgumentId{o});
    // Nothing of an instance may follow its closing; this also keeps two
    // closings of one instance apart.
    for (auto o : same.closings) framework_.add_mutual_attack(x, ArgumentId{o});

    if (is_opening(s) && j > 1) {
      const auto nee = add({ArgumentKind::NotEnoughExecutions, c, a, s, j, 0, x});
      framework_.add_attack(nee, x);
      for (auto o : lists(a, j - 1).openings) framework_.add_attack(ArgumentId{o}, nee);
      framework_.add_attack(ni1, nee);
    }
    if (s == StepType::Intermediate || s == StepType::Last) {
      const auto ns = add({ArgumentKind::NotStarted, c, a, s, j, 0, x});
      framework_.add_attack(ns, x);
      for (auto o : same.openings) framework_.add_attack(ArgumentId{o}, ns);
      framework_.add_attack(ni1, ns);
    }
  }

  const auto& constraints = process.constraints;
  for (std::size_t q = 0; q < constraints.size(); ++q) {
    const auto& k = constraints[q];
    switch (k.kind) {
      case ConstraintKind::Not:
      case ConstraintKind::NegPrecedence: {
        // Both forbid an opening of rhs within T after a closing of lhs.
        const auto lhs = k.lhs.front();
        const auto rhs = k.rhs.front();
        for (auto x : here) {
          const auto& info = infos_[x.value];
          if (info.activity != rhs || !is_opening(info.step)) continue;
          for (auto o : closings_by_activity_[lhs.value])
            if (k.in_window_before(infos_[o].index, c)) framework_.add_mutual_attack(x, ArgumentId{o});
        }
        break;
      }
      case ConstraintKind::Precedence: {
        const auto rhs = k.rhs.front();
        std::vector<ArgumentId> opened;
        for (auto x : here)
          if (infos_[x.value].activity == rhs && is_opening(infos_[x.value].step)) opened.push_back(x);
        if (opened.empty()) break;
        const auto pv = add({ArgumentKind::PrecedenceViolation, c, rhs, StepType::First, 0, q});
        for (auto x : opened) framework_.add_attack(pv, x);
        for (auto l : k.lhs)
          for (auto o : closings_by_activity_[l.value])
            if (k.in_window_before(infos_[o].index, c)) framework_.add_attack(ArgumentId{o}, pv);
        framework_.add_attack(ni1, pv);
        break;
      }
      case ConstraintKind::Must: {
        const auto lhs = k.lhs.front();
        const bool closes = std::any_of(here.begin(), here.end(), [&](ArgumentId x) {
          return infos_[x.value].activity == lhs && is_closing(infos_[x.value].step);
        });
        if (closes) pending_.push_back({q, c});
        break;
      }
    }
  }

  for (auto x : here) {
    const auto& info = infos_[x.value];
    auto& same = lists(info.activity, info.instance);
    if (is_opening(info.step)) {
      push(same.openings, x.value);
      push(openings_by_activity_[info.activity.value], x.value);
    }
    if (is_closing(info.step)) {
      push(same.closings, x.value);
      push(closings_by_activity_[info.activity.value], x.value);
    }
    push(same.all, x.value);
  }

  std::vector<PendingMust> still;
  for (const auto& p : pending_) {
    const auto& w = constraints[p.constraint].window;
    if (w && p.index + *w <= c)
      instantiate_must(p, c);
    else
      still.push_back(p);
  }
  pending_ = std::move(still);
}

void Session::instantiate_must(const PendingMust& p, std::size_t end) {
  const auto& k = model_->process.constraints[p.constraint];
  const auto lhs = k.lhs.front();
  const auto mv = add({ArgumentKind::MustViolation, p.index, lhs, StepType::Last, 0, p.constraint});
  for (auto x : per_event_[p.index - 1].ids)
    if (infos_[x.value].activity == lhs && is_closing(infos_[x.value].step)) framework_.add_attack(mv, x);
  for (auto b : k.rhs)
    for (auto o : openings_by_activity_[b.value]) {
      const auto m = infos_[o].index;
      if (m <= end && k.in_window_after(p.index, m)) framework_.add_attack(ArgumentId{o}, mv);
    }
  framework_.add_attack(per_event_.front().not_interpreted, mv);
}

void Session::finalize() {
  if (finalized_) throw ContractError("session already finalized");
  mutated();
  finalized_ = true;
  if (events_.empty()) {
    pending_.clear();
    return;
  }
  const auto ni1 = per_event_.front().not_interpreted;
  for (const auto& [key, l] : instances_) {
    std::vector<ArgumentId> firsts, lasts;
    for (auto x : l.all) {
      if (infos_[x].step == StepType::First) firsts.emplace_back(x);
      if (infos_[x].step == StepType::Last) lasts.emplace_back(x);
    }
    if (firsts.empty()) continue;
    const auto ne = add({ArgumentKind::NotEnded, 0, ActivityId{key.first}, StepType::First, key.second});
    for (auto x : firsts) framework_.add_attack(ne, x);
    for (auto x : lasts) framework_.add_attack(x, ne);
    framework_.add_attack(ni1, ne);
  }
  for (const auto& p : pending_) instantiate_must(p, events_.size());
  pending_.clear();
}

FrameworkSnapshot Session::get_aaf() const {
  return FrameworkSnapshot{uid_,    history_.size() - 1, history_.back(), framework_.mark(), events_.size(),
                           finalized_, pending_};
}

void Session::set_aaf(const FrameworkSnapshot& snap) {
  if (snap.session != uid_) throw ContractError("snapshot belongs to another session");
  if (snap.depth >= history_.size() || history_[snap.depth] != snap.stamp)
    throw ContractError("snapshot is not on this session's current history");
  if (snap.depth == history_.size() - 1) return;
  framework_.truncate(snap.mark);
  infos_.resize(snap.mark.arguments);
  events_.resize(snap.prefix_length);
  per_event_.resize(snap.prefix_length);
  finalized_ = snap.finalized;
  pending_ = snap.pending;
  while (!push_log_.empty() && push_log_.back()->back() >= snap.mark.arguments) {
    push_log_.back()->pop_back();
    push_log_.pop_back();
  }
  history_.resize(snap.depth + 1);
  solver_.reset();
  cache_.clear();
  if (hint_.size() > infos_.size()) hint_.resize(infos_.size());
}

aaf::Solver& Session::solver() {
  if (!solver_) solver_ = std::make_unique<aaf::Solver>(framework_, solver_options_);
  return *solver_;
}

void Session::remember(const aaf::ArgumentSet& ext) {
  hint_.assign(framework_.size(), 0);
  for (auto x : ext) {
    cache_[x.value] = 1;
    hint_[x.value] = 1;
  }
}

bool Session::accepted(ArgumentId a) {
  if (cache_.size() != framework_.size()) cache_.assign(framework_.size(), -1);
  if (cache_[a.value] >= 0) return cache_[a.value] == 1;
  std::vector<ArgumentId> hints;
  for (std::uint32_t x = 0; x < hint_.size() && x < framework_.size(); ++x)
    if (hint_[x]) hints.emplace_back(x);
  const ArgumentId seed[] = {a};
  const auto ext = solver().find_admissible(seed, {}, hints);
  if (!ext) {
    cache_[a.value] = 0;
    return false;
  }
  remember(*ext);
  return true;
}

bool Session::any_accepted(std::span<const ArgumentId> candidates) {
  if (cache_.size() != framework_.size()) cache_.assign(framework_.size(), -1);
  std::vector<ArgumentId> open;
  for (auto x : candidates) {
    if (cache_[x.value] == 1) return true;
    if (cache_[x.value] < 0) open.push_back(x);
  }
  if (open.empty()) return false;
  const auto ext = solver().find_admissible_any(open);
  if (!ext) {
    for (auto x : open) cache_[x.value] = 0;
    return false;
  }
  remember(*ext);
  return true;
}

std::optional<ArgumentId> Session::find(const InterpretationArgument& arg) const {
  if (arg.index < 1 || arg.index > per_event_.size()) return std::nullopt;
  for (auto x : per_event_[arg.index - 1].ids) {
    const auto& info = infos_[x.value];
    if (info.activity == arg.activity && info.step == arg.step && info.instance == arg.instance) return x;
  }
  return std::nullopt;
}

std::span<const ArgumentId> Session::arguments_at(std::size_t index) const {
  check_index(index);
  return per_event_[index - 1].ids;
}

bool Session::credulous(const InterpretationArgument& arg) {
  check_index(arg.index);
  const auto id = find(arg);
  return id && accepted(*id);
}

// Preferred extensions restricted to readings are exactly the valid
// interpretations, so a reading is in all of them iff it is accepted and no
// rival reading of the same event is.
bool Session::skeptical(const InterpretationArgument& arg) {
  if (!credulous(arg)) return false;
  for (auto x : per_event_[arg.index - 1].ids)
    if (infos_[x.value].interpretation() != arg && accepted(x)) return false;
  return true;
}

Answer Session::answer(const InterpretationQuery& q) {
  check_index(q.index);
  Answer out;
  if (q.is_boolean()) {
    out.boolean_form = true;
    const InterpretationArgument arg{q.index, *q.activity, *q.step, *q.instance};
    out.yes = q.semantics == Semantics::Credulous ? credulous(arg) : skeptical(arg);
    return out;
  }
  auto all = accepted_at(q.index);
  if (q.semantics == Semantics::Skeptical && all.size() != 1) all.clear();
  for (const auto& arg : all) {
    if (q.activity && arg.activity != *q.activity) continue;
    if (q.step && arg.step != *q.step) continue;
    if (q.instance && arg.instance != *q.instance) continue;
    out.arguments.push_back(arg);
  }
  return out;
}

bool Session::has_accepted(std::size_t index, ActivityId activity) {
  check_index(index);
  std::vector<ArgumentId> readings;
  for (auto x : per_event_[index - 1].ids)
    if (infos_[x.value].activity == activity) readings.push_back(x);
  return any_accepted(readings);
}

std::vector<InterpretationArgument> Session::accepted_at(std::size_t index) {
  check_index(index);
  const auto& ids = per_event_[index - 1].ids;
  // Each successful query settles at least one more reading.
  for (;;) {
    std::vector<ArgumentId> open;
    for (auto x : ids)
      if (cache_.size() != framework_.size() || cache_[x.value] < 0) open.push_back(x);
    if (open.empty() || !any_accepted(open)) break;
  }
  std::vector<InterpretationArgument> out;
  for (auto x : ids)
    if (cache_[x.value] == 1) out.push_back(infos_[x.value].interpretation());
  std::sort(out.begin(), out.end(), canonical_less);
  return out;
}

std::vector<InvalidityReason> Session::explain(const InterpretationQuery& q) {
  if (!q.is_boolean()) throw ContractError("explanations need a fully specified query");
  check_index(q.index);
  const auto i = q.index;
  const auto a = *q.activity;
  const auto s = *q.step;
  const auto j = *q.instance;
  if (a.value >= model_->num_activities()) throw SchemaError("unknown activity id " + std::to_string(a.value));
  std::vector<InvalidityReason> reasons;
  const auto& process = model_->process;
  if (!model_->mapping.contains(events_[i - 1].type, a, s)) reasons.push_back({ReasonKind::Mapping, {i}});
  if (i == 1 && (!process.is_start(a) || !is_opening(s) || j != 1)) reasons.push_back({ReasonKind::Start, {1}});
  if (j == 0 || j > process.instance_cap(a, i)) reasons.push_back({ReasonKind::InstanceLimit, {i}});
  if (!reasons.empty()) return reasons;
  const auto id = find({i, a, s, j});
  if (!id) return {{ReasonKind::NotCandidate, {i}}};
  if (accepted(*id)) return {};
  return explain_argument(*id);
}

std::vector<InvalidityReason> Session::explain_activity(std::size_t index, ActivityId activity) {
  check_index(index);
  const auto acts = model_->mapping.cand_act(events_[index - 1].type);
  if (std::find(acts.begin(), acts.end(), activity) == acts.end()) return {{ReasonKind::Mapping, {index}}};
  if (index == 1 && !model_->process.is_start(activity)) return {{ReasonKind::Start, {1}}};
  std::vector<ArgumentId> readings;
  for (auto x : per_event_[index - 1].ids)
    if (infos_[x.value].activity == activity) readings.push_back(x);
  if (readings.empty()) return {{index == 1 ? ReasonKind::Start : ReasonKind::NotCandidate, {index}}};
  for (auto x : readings)
    if (accepted(x)) return {};
  std::vector<InvalidityReason> out;
  for (auto x : readings) {
    auto r = explain_argument(x);
    out.insert(out.end(), r.begin(), r.end());
  }
  sort_unique(out);
  return out;
}

// Attackers that alpha does not answer itself are tried one at a time: the
// admissibility search for {alpha} runs with every other attacker ignored,
// and each attacker for which it still fails is a reason on its own. When
// no single attacker is decisive, all of them are reported together.
std::vector<InvalidityReason> Session::explain_argument(ArgumentId alpha) {
  const auto& me = infos_[alpha.value];
  const auto attackers = framework_.attackers(alpha);
  std::vector<ArgumentId> one_way;
  for (auto b : attackers)
    if (b != alpha && !framework_.attacks(alpha, b)) one_way.push_back(b);
  std::sort(one_way.begin(), one_way.end());
  one_way.erase(std::unique(one_way.begin(), one_way.end()), one_way.end());

  std::vector<ArgumentId> decisive;
  const ArgumentId seed[] = {alpha};
  for (auto b : one_way) {
    std::vector<ArgumentId> exempt;
    for (auto o : attackers)
      if (o != b) exempt.push_back(o);
    if (!solver().find_admissible(seed, exempt)) decisive.push_back(b);
  }
  if (decisive.empty()) decisive = one_way;

  std::vector<InvalidityReason> out;
  for (auto b : decisive) {
    const auto& info = infos_[b.value];
    switch (info.kind) {
      case ArgumentKind::NotInterpreted: {
        InvalidityReason r{ReasonKind::ConflictingInterpretation, {me.index, info.index}};
        for (auto x : per_event_[info.index - 1].ids)
          if (framework_.attacks(x, alpha)) r.conflicts.push_back(infos_[x.value].interpretation());
        if (r.conflicts.empty()) {
          r.kind = ReasonKind::Uninterpretable;
          r.indices = {info.index};
        }
        std::sort(r.conflicts.begin(), r.conflicts.end(), canonical_less);
        out.push_back(std::move(r));
        break;
      }
      case ArgumentKind::NotStarted:
        out.push_back({ReasonKind::NotStarted, {me.index}});
        break;
      case ArgumentKind::NotEnoughExecutions:
        out.push_back({ReasonKind::NotEnoughExecutions, {me.index}});
        break;
      case ArgumentKind::NotEnded:
        out.push_back({ReasonKind::NotEnded, {me.index}});
        break;
      case ArgumentKind::MustViolation:
        out.push_back({ReasonKind::UnmetMust, {info.index}, info.constraint});
        break;
      case ArgumentKind::PrecedenceViolation:
        out.push_back({ReasonKind::UnmetPrecedence, {info.index}, info.constraint});
        break;
      case ArgumentKind::Interpretation:
        break;
    }
  }
  sort_unique(out);
  return out;
}

Census Session::census() const {
  Census c;
  c.arguments = framework_.size();
  c.attacks = framework_.num_attacks();
  for (const auto& info : infos_) ++c.by_kind[info.kind];
  return c;
}

}  // namespace sift::reasoner
