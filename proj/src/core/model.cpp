#include "sift/core/model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sift/errors.hpp"

namespace sift {

using nlohmann::json;

namespace {

constexpr std::uint8_t bit(StepType s) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(s)); }

}  // namespace

TypeLevelMapping::TypeLevelMapping(std::size_t num_event_types, std::size_t num_activities)
    : num_event_types_(num_event_types),
      num_activities_(num_activities),
      masks_(num_event_types * num_activities, 0) {}

void TypeLevelMapping::check(EventTypeId et) const {
  if (et.value >= num_event_types_)
    throw SchemaError("unknown event type id " + std::to_string(et.value));
}

std::uint8_t TypeLevelMapping::mask(EventTypeId et, ActivityId a) const {
  return masks_[et.value * num_activities_ + a.value];
}

void TypeLevelMapping::add(EventTypeId et, ActivityId a, StepType s) {
  check(et);
  if (a.value >= num_activities_) throw SchemaError("unknown activity id " + std::to_string(a.value));
  auto& m = masks_[et.value * num_activities_ + a.value];
  if (m & bit(s)) throw ContractError("duplicate mapping triple");
  m |= bit(s);
  ++triples_;
}

bool TypeLevelMapping::contains(EventTypeId et, ActivityId a, StepType s) const {
  if (et.value >= num_event_types_ || a.value >= num_activities_) return false;
  return (mask(et, a) & bit(s)) != 0;
}

std::vector<ActivityId> TypeLevelMapping::cand_act(EventTypeId et) const {
  check(et);
  std::vector<ActivityId> out;
  for (std::uint32_t a = 0; a < num_activities_; ++a)
    if (mask(et, ActivityId{a}) != 0) out.emplace_back(a);
  return out;
}

std::vector<std::pair<ActivityId, StepType>> TypeLevelMapping::cand_steps(EventTypeId et) const {
  check(et);
  std::vector<std::pair<ActivityId, StepType>> out;
  for (std::uint32_t a = 0; a < num_activities_; ++a) {
    const auto m = mask(et, ActivityId{a});
    for (StepType s : kAllSteps)
      if (m & bit(s)) out.emplace_back(ActivityId{a}, s);
  }
  return out;
}

std::size_t TypeLevelMapping::max_degree() const {
  std::size_t best = 0;
  for (std::uint32_t et = 0; et < num_event_types_; ++et)
    best = std::max(best, cand_act(EventTypeId{et}).size());
  return best;
}

std::string_view to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::Must:
      return "must";
    case ConstraintKind::Not:
      return "not";
    case ConstraintKind::Precedence:
      return "precedence";
    case ConstraintKind::NegPrecedence:
      return "neg_precedence";
  }
  return "?";
}

std::optional<ConstraintKind> parse_constraint_kind(std::string_view text) {
  if (text == "must" || text == "MC") return ConstraintKind::Must;
  if (text == "not" || text == "NC") return ConstraintKind::Not;
  if (text == "precedence" || text == "PC") return ConstraintKind::Precedence;
  if (text == "neg_precedence" || text == "NPC") return ConstraintKind::NegPrecedence;
  return std::nullopt;
}

std::uint32_t DeclarativeProcessModel::instance_cap(ActivityId a, std::size_t idx) const {
  const auto& cap = max_inst.at(a.value);
  const auto by_index = static_cast<std::uint32_t>(std::min<std::size_t>(idx, UINT32_MAX));
  return cap ? std::min(*cap, by_index) : by_index;
}

ActivityId DomainModel::activity(std::string_view name) const {
  auto id = activities.find(name);
  if (!id) throw SchemaError("unknown activity '" + std::string(name) + "'");
  return ActivityId{*id};
}

EventTypeId DomainModel::event_type(std::string_view name) const {
  auto id = event_types.find(name);
  if (!id) throw SchemaError("unknown event type '" + std::string(name) + "'");
  return EventTypeId{*id};
}

void DomainModel::validate() const {
  const auto na = activities.size();
  if (mapping.num_activities() != na || mapping.num_event_types() != event_types.size())
    throw ParseError("/mapping", "mapping dimensions disagree with the declared universes");
  if (process.start_acts.size() != na) throw ParseError("/start_activities", "size mismatch");
  if (std::none_of(process.start_acts.begin(), process.start_acts.end(), [](bool b) { return b; }))
    throw ParseError("/start_activities", "start activities must be non-empty");
  if (process.max_inst.size() != na) throw ParseError("/max_instances", "must cover every activity");
  for (std::size_t a = 0; a < na; ++a)
    if (process.max_inst[a] && *process.max_inst[a] == 0)
      throw ParseError("/max_instances/" + activities.name(static_cast<std::uint32_t>(a)),
                       "bound must be positive");
  for (std::size_t q = 0; q < process.constraints.size(); ++q) {
    const auto& c = process.constraints[q];
    const std::string at = "/constraints/" + std::to_string(q);
    if (c.window && *c.window == 0) throw ParseError(at + "/window", "window must be >= 1");
    auto known = [&](const std::vector<ActivityId>& v, const char* side) {
      for (auto a : v)
        if (a.value >= na) throw ParseError(at + "/" + side, "unknown activity");
    };
    known(c.lhs, "lhs");
    known(c.rhs, "rhs");
    if (c.lhs.empty()) throw ParseError(at + "/lhs", "must be non-empty");
    if (c.rhs.empty()) throw ParseError(at + "/rhs", "must be non-empty");
    switch (c.kind) {
      case ConstraintKind::Must:
        if (c.lhs.size() != 1) throw ParseError(at + "/lhs", "must-constraint needs a single trigger");
        break;
      case ConstraintKind::Not:
        if (c.lhs.size() != 1 || c.rhs.size() != 1)
          throw ParseError(at, "not-constraint needs singleton sides");
        break;
      case ConstraintKind::Precedence:
        if (c.rhs.size() != 1) throw ParseError(at + "/rhs", "precedence needs a single guarded activity");
        break;
      case ConstraintKind::NegPrecedence:
        if (c.lhs.size() != 1 || c.rhs.size() != 1)
          throw ParseError(at, "negative precedence needs singleton sides");
        break;
    }
  }
}

namespace {

const json& require(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ParseError(std::string("/") + key, "missing field");
  return *it;
}

std::string as_string(const json& j, const std::string& locus) {
  if (!j.is_string()) throw ParseError(locus, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> string_list(const json& j, const std::string& locus) {
  if (!j.is_array()) throw ParseError(locus, "expected an array");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], locus + "/" + std::to_string(i)));
  return out;
}

ActivityId lookup_activity(const Vocabulary& v, const std::string& name, const std::string& locus) {
  auto id = v.find(name);
  if (!id) throw ParseError(locus, "unknown activity '" + name + "'");
  return ActivityId{*id};
}

std::optional<std::uint32_t> parse_bound(const json& j, const std::string& locus, bool zero_is_unbounded) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "unbounded") return std::nullopt;
    throw ParseError(locus, "expected a positive integer or \"inf\"");
  }
  if (!j.is_number_integer()) throw ParseError(locus, "expected an integer");
  const auto v = j.get<long long>();
  if (v < 0) throw ParseError(locus, "must be non-negative");
  if (v == 0) {
    if (zero_is_unbounded) return std::nullopt;
    throw ParseError(locus, "window must be >= 1");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

DomainModel parse_model(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), e.what());
  }
  if (!doc.is_object()) throw ParseError("/", "model document must be an object");

  DomainModel m;
  try {
    for (auto& n : string_list(require(doc, "activities"), "/activities")) m.activities.add(n);
    for (auto& n : string_list(require(doc, "event_types"), "/event_types")) m.event_types.add(n);
  } catch (const SchemaError& e) {
    throw ParseError("/activities", e.what());
  }
  const auto na = m.activities.size();
  m.mapping = TypeLevelMapping(m.event_types.size(), na);

  const auto& mapping = require(doc, "mapping");
  if (!mapping.is_array()) throw ParseError("/mapping", "expected an array");
  for (std::size_t i = 0; i < mapping.size(); ++i) {
    const std::string at = "/mapping/" + std::to_string(i);
    const auto& entry = mapping[i];
    if (!entry.is_object()) throw ParseError(at, "expected an object");
    const auto et_name = as_string(entry.value("event", json()), at + "/event");
    auto et = m.event_types.find(et_name);
    if (!et) throw ParseError(at + "/event", "unknown event type '" + et_name + "'");
    const auto a = lookup_activity(m.activities, as_string(entry.value("activity", json()), at + "/activity"),
                                   at + "/activity");
    const auto steps = string_list(entry.value("steps", json()), at + "/steps");
    if (steps.empty()) throw ParseError(at + "/steps", "at least one step required");
    for (std::size_t s = 0; s < steps.size(); ++s) {
      auto st = parse_step(steps[s]);
      if (!st) throw ParseError(at + "/steps/" + std::to_string(s), "unknown step '" + steps[s] + "'");
      if (m.mapping.contains(EventTypeId{*et}, a, *st))
        throw ParseError(at + "/steps/" + std::to_string(s), "duplicate mapping triple");
      m.mapping.add(EventTypeId{*et}, a, *st);
    }
  }

  m.process.start_acts.assign(na, false);
  const auto starts = string_list(require(doc, "start_activities"), "/start_activities");
  for (std::size_t i = 0; i < starts.size(); ++i)
    m.process.start_acts[lookup_activity(m.activities, starts[i], "/start_activities/" + std::to_string(i)).value] =
        true;

  const auto& maxi = require(doc, "max_instances");
  if (!maxi.is_object()) throw ParseError("/max_instances", "expected an object");
  m.process.max_inst.assign(na, std::nullopt);
  std::vector<bool> seen(na, false);
  for (auto it = maxi.begin(); it != maxi.end(); ++it) {
    const std::string at = "/max_instances/" + it.key();
    const auto a = lookup_activity(m.activities, it.key(), at);
    m.process.max_inst[a.value] = parse_bound(it.value(), at, /*zero_is_unbounded=*/true);
    seen[a.value] = true;
  }
  for (std::size_t a = 0; a < na; ++a)
    if (!seen[a])
      throw ParseError("/max_instances/" + m.activities.name(static_cast<std::uint32_t>(a)), "missing bound");

  if (auto it = doc.find("constraints"); it != doc.end()) {
    if (!it->is_array()) throw ParseError("/constraints", "expected an array");
    for (std::size_t q = 0; q < it->size(); ++q) {
      const std::string at = "/constraints/" + std::to_string(q);
      const auto& c = (*it)[q];
      if (!c.is_object()) throw ParseError(at, "expected an object");
      Constraint con;
      const auto kind_name = as_string(c.value("kind", json()), at + "/kind");
      auto kind = parse_constraint_kind(kind_name);
      if (!kind) throw ParseError(at + "/kind", "unknown constraint kind '" + kind_name + "'");
      con.kind = *kind;
      const auto lhs = string_list(c.value("lhs", json::array()), at + "/lhs");
      const auto rhs = string_list(c.value("rhs", json::array()), at + "/rhs");
      for (std::size_t i = 0; i < lhs.size(); ++i)
        con.lhs.push_back(lookup_activity(m.activities, lhs[i], at + "/lhs/" + std::to_string(i)));
      for (std::size_t i = 0; i < rhs.size(); ++i)
        con.rhs.push_back(lookup_activity(m.activities, rhs[i], at + "/rhs/" + std::to_string(i)));
      std::sort(con.lhs.begin(), con.lhs.end());
      std::sort(con.rhs.begin(), con.rhs.end());
      con.window = c.contains("window") ? parse_bound(c["window"], at + "/window", /*zero_is_unbounded=*/false)
                                        : std::nullopt;
      m.process.constraints.push_back(std::move(con));
    }
  }

  m.validate();
  return m;
}

std::string serialize_model(const DomainModel& m) {
  json doc;
  doc["v"] = 1;
  doc["activities"] = m.activities.names();
  doc["event_types"] = m.event_types.names();

  struct Row {
    std::string event, activity;
    std::vector<std::string> steps;
  };
  std::vector<Row> rows;
  for (std::uint32_t et = 0; et < m.event_types.size(); ++et) {
    for (std::uint32_t a = 0; a < m.activities.size(); ++a) {
      Row r{m.event_types.name(et), m.activities.name(a), {}};
      for (StepType s : kAllSteps)
        if (m.mapping.contains(EventTypeId{et}, ActivityId{a}, s)) r.steps.emplace_back(to_string(s));
      if (!r.steps.empty()) rows.push_back(std::move(r));
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const Row& x, const Row& y) { return std::tie(x.event, x.activity) < std::tie(y.event, y.activity); });
  json mapping = json::array();
  for (auto& r : rows) mapping.push_back({{"event", r.event}, {"activity", r.activity}, {"steps", r.steps}});
  doc["mapping"] = std::move(mapping);

  std::vector<std::string> starts;
  for (std::uint32_t a = 0; a < m.activities.size(); ++a)
    if (m.process.start_acts[a]) starts.push_back(m.activities.name(a));
  std::sort(starts.begin(), starts.end());
  doc["start_activities"] = starts;

  json maxi = json::object();
  for (std::uint32_t a = 0; a < m.activities.size(); ++a) {
    const auto& b = m.process.max_inst[a];
    maxi[m.activities.name(a)] = b ? *b : 0u;
  }
  doc["max_instances"] = std::move(maxi);

  json cons = json::array();
  for (const auto& c : m.process.constraints) {
    auto names = [&](const std::vector<ActivityId>& v) {
      std::vector<std::string> out;
      auto ids = v;
      std::sort(ids.begin(), ids.end());
      for (auto a : ids) out.push_back(m.activities.name(a.value));
      return out;
    };
    json jc = {{"kind", std::string(to_string(c.kind))}, {"lhs", names(c.lhs)}, {"rhs", names(c.rhs)}};
    jc["window"] = c.window ? json(*c.window) : json("inf");
    cons.push_back(std::move(jc));
  }
  doc["constraints"] = std::move(cons);
  return doc.dump(2) + "\n";
}

DomainModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open model file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace sift
