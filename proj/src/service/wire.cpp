#include "sift/service/wire.hpp"

#include "sift/errors.hpp"

namespace sift::service {

namespace {

std::string activity_name(const DomainModel& m, ActivityId a) { return std::string(m.activities.name(a.value)); }

template <class T>
T get_as(const json& j, const char* name) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ParseError(name, std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw ParseError(name, "expected a JSON object");
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(name, std::string("missing field '") + name + "'");
  return *it;
}

Event event_from_json(const DomainModel& model, const json& j) {
  Event e;
  e.type = model.event_type(get_as<std::string>(field(j, "type"), "type"));
  if (auto it = j.find("attrs"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ParseError("attrs", "field 'attrs' must be an object");
    for (const auto& [name, v] : it->items()) {
      if (v.is_string())
        e.attrs.push_back({name, v.get<std::string>()});
      else if (v.is_number())
        e.attrs.push_back({name, v.get<double>()});
      else
        throw ParseError("attrs." + name, "attribute '" + name + "' must be a string or a number");
    }
  }
  return e;
}

json event_to_json(const DomainModel& model, const Event& e) {
  json attrs = json::object();
  for (const auto& a : e.attrs) {
    if (const auto* s = std::get_if<std::string>(&a.value))
      attrs[a.name] = *s;
    else
      attrs[a.name] = std::get<double>(a.value);
  }
  return {{"index", e.index}, {"type", model.event_types.name(e.type.value)}, {"attrs", attrs}};
}

json argument_to_json(const DomainModel& model, const reasoner::InterpretationArgument& a) {
  return {{"index", a.index},
          {"activity", activity_name(model, a.activity)},
          {"step", to_string(a.step)},
          {"instance", a.instance}};
}

json step_result_to_json(const DomainModel& model, const pipeline::StepResult& r) {
  json ranked = json::array();
  for (const auto& x : r.ranked) ranked.push_back({{"activity", activity_name(model, x.activity)}, {"probability", x.probability}});
  json valid = json::array();
  for (auto a : r.valid) valid.push_back(activity_name(model, a));
  json prediction = json::object();
  for (std::size_t a = 0; a < r.prediction.size(); ++a) prediction[std::string(model.activities.name(a))] = r.prediction[a];
  return {{"v", kWireVersion},  {"index", r.index},           {"ranked", ranked}, {"deviation", r.deviation},
          {"unresolved", r.unresolved}, {"valid", valid}, {"prediction", prediction}};
}

reasoner::InterpretationQuery query_from_json(const DomainModel& model, const json& j) {
  reasoner::InterpretationQuery q;
  q.index = get_as<std::size_t>(field(j, "index"), "index");
  if (auto it = j.find("activity"); it != j.end() && !it->is_null())
    q.activity = model.activity(get_as<std::string>(*it, "activity"));
  if (auto it = j.find("step"); it != j.end() && !it->is_null()) {
    const auto text = get_as<std::string>(*it, "step");
    q.step = parse_step(text);
    if (!q.step) throw ParseError("step", "unknown step '" + text + "'");
  }
  if (auto it = j.find("instance"); it != j.end() && !it->is_null()) {
    const auto n = get_as<std::int64_t>(*it, "instance");
    if (n < 1) throw ParseError("instance", "instance must be at least 1");
    q.instance = static_cast<std::uint32_t>(n);
  }
  if (auto it = j.find("semantics"); it != j.end() && !it->is_null()) {
    const auto s = get_as<std::string>(*it, "semantics");
    if (s == "credulous")
      q.semantics = reasoner::Semantics::Credulous;
    else if (s == "skeptical")
      q.semantics = reasoner::Semantics::Skeptical;
    else
      throw ParseError("semantics", "semantics must be 'credulous' or 'skeptical'");
  }
  return q;
}

json answer_to_json(const DomainModel& model, const reasoner::Answer& a) {
  json out = {{"v", kWireVersion}};
  if (a.boolean_form) {
    out["kind"] = "boolean";
    out["yes"] = a.yes;
  } else {
    out["kind"] = "wildcard";
    json args = json::array();
    for (const auto& x : a.arguments) args.push_back(argument_to_json(model, x));
    out["arguments"] = args;
  }
  return out;
}

json reasons_to_json(const DomainModel& model, const std::vector<reasoner::InvalidityReason>& reasons) {
  json list = json::array();
  for (const auto& r : reasons) {
    json item = {{"kind", to_string(r.kind)}, {"indices", r.indices}};
    if (r.constraint) item["constraint"] = *r.constraint;
    if (!r.conflicts.empty()) {
      json conflicts = json::array();
      for (const auto& c : r.conflicts) conflicts.push_back(argument_to_json(model, c));
      item["conflicts"] = conflicts;
    }
    list.push_back(item);
  }
  return {{"v", kWireVersion}, {"valid", reasons.empty()}, {"reasons", list}};
}

json summary_to_json(const DomainModel& model, const pipeline::Summary& s) {
  json events = json::array();
  for (const auto& e : s.events) {
    json accepted = json::array();
    for (const auto& a : e.accepted) accepted.push_back(argument_to_json(model, a));
    json dropped = json::array();
    for (auto a : e.dropped) dropped.push_back(activity_name(model, a));
    events.push_back({{"index", e.index}, {"accepted", accepted}, {"dropped", dropped},
                      {"top_inconsistent", e.top_inconsistent}});
  }
  return {{"v", kWireVersion}, {"events", events}, {"inconsistent", s.inconsistent}, {"deviations", s.deviations}};
}

SessionConfig config_from_json(const json& j) {
  SessionConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ParseError("config", "config must be an object");
  if (auto it = j.find("k"); it != j.end() && !it->is_null()) {
    if (it->is_string() && it->get<std::string>() == "auto") {
      c.pipeline.k.reset();
    } else {
      const auto k = get_as<std::int64_t>(*it, "k");
      if (k < 1) throw ParseError("k", "k must be 'auto' or at least 1");
      c.pipeline.k = static_cast<std::size_t>(k);
    }
  }
  if (auto it = j.find("gamma"); it != j.end()) c.pipeline.gamma = get_as<double>(*it, "gamma");
  if (auto it = j.find("pseudo_count"); it != j.end()) c.pipeline.pseudo_count = get_as<double>(*it, "pseudo_count");
  if (auto it = j.find("denominator"); it != j.end()) {
    const auto d = get_as<std::string>(*it, "denominator");
    if (d == "universe")
      c.pipeline.denominator = pipeline::SmoothingDenominator::Universe;
    else if (d == "valid")
      c.pipeline.denominator = pipeline::SmoothingDenominator::ValidSet;
    else
      throw ParseError("denominator", "denominator must be 'universe' or 'valid'");
  }
  if (auto it = j.find("node_budget"); it != j.end()) {
    const auto n = get_as<std::int64_t>(*it, "node_budget");
    if (n < 1) throw ParseError("node_budget", "node_budget must be positive");
    c.solver.node_budget = static_cast<std::size_t>(n);
  }
  return c;
}

json config_to_json(const SessionConfig& c) {
  json k = c.pipeline.k ? json(*c.pipeline.k) : json("auto");
  return {{"k", k},
          {"gamma", c.pipeline.gamma},
          {"pseudo_count", c.pipeline.pseudo_count},
          {"denominator", c.pipeline.denominator == pipeline::SmoothingDenominator::Universe ? "universe" : "valid"},
          {"node_budget", c.solver.node_budget}};
}

}  // namespace sift::service
