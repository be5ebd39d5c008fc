#include "sift/core/dataset.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sift/errors.hpp"

namespace sift {

using nlohmann::json;

std::string serialize_record(const DomainModel& model, const LabeledTrace& record) {
  json events = json::array();
  for (const auto& e : record.trace.events) {
    json attrs = json::object();
    for (const auto& a : e.attrs) {
      if (const auto* s = std::get_if<std::string>(&a.value))
        attrs[a.name] = *s;
      else
        attrs[a.name] = std::get<double>(a.value);
    }
    events.push_back({{"type", model.event_types.name(e.type.value)}, {"attrs", attrs}});
  }
  json doc = {{"id", record.trace.id}, {"events", events}, {"finalized", record.trace.finalized}};
  if (!record.labels.empty()) {
    json labels = json::array();
    for (const auto& l : record.labels)
      labels.push_back({{"activity", model.activities.name(l.activity.value)},
                        {"step", std::string(to_string(l.step))},
                        {"instance", l.instance}});
    doc["labels"] = labels;
  }
  return doc.dump();
}

LabeledTrace parse_record(const DomainModel& model, std::string_view line, std::size_t line_no) {
  const std::string locus = line_no ? "line " + std::to_string(line_no) : std::string();
  auto fail = [&](const std::string& what) { return ParseError(locus, what); };
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw fail(e.what());
  }
  if (!doc.is_object()) throw fail("record must be an object");
  LabeledTrace out;
  try {
    out.trace.id = doc.value("id", std::string());
    out.trace.finalized = doc.value("finalized", false);
    const auto& events = doc.at("events");
    if (!events.is_array()) throw fail("events must be an array");
    for (const auto& je : events) {
      Event e;
      e.index = out.trace.events.size() + 1;
      const auto type = je.at("type").get<std::string>();
      const auto id = model.event_types.find(type);
      if (!id) throw fail("unknown event type '" + type + "'");
      e.type = EventTypeId{*id};
      if (je.contains("attrs")) {
        for (const auto& [name, v] : je.at("attrs").items()) {
          if (v.is_string())
            e.attrs.push_back({name, v.get<std::string>()});
          else if (v.is_number())
            e.attrs.push_back({name, v.get<double>()});
          else
            throw fail("attribute '" + name + "' must be a string or a number");
        }
      }
      out.trace.events.push_back(std::move(e));
    }
    if (doc.contains("labels") && !doc.at("labels").is_null()) {
      for (const auto& jl : doc.at("labels")) {
        const auto name = jl.at("activity").get<std::string>();
        const auto a = model.activities.find(name);
        if (!a) throw fail("unknown activity '" + name + "'");
        const auto step = parse_step(jl.at("step").get<std::string>());
        if (!step) throw fail("unknown step '" + jl.at("step").get<std::string>() + "'");
        const auto inst = jl.value("instance", 1);
        if (inst < 1) throw fail("instance must be >= 1");
        out.labels.push_back(Assignment{ActivityId{*a}, *step, static_cast<std::uint32_t>(inst)});
      }
      if (out.labels.size() != out.trace.events.size()) throw fail("label count differs from event count");
    }
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  return out;
}

std::vector<LabeledTrace> parse_dataset(const DomainModel& model, std::string_view text) {
  std::vector<LabeledTrace> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) out.push_back(parse_record(model, line, line_no));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

std::vector<LabeledTrace> load_dataset(const DomainModel& model, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open dataset file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(model, buf.str());
}

std::string serialize_dataset(const DomainModel& model, const std::vector<LabeledTrace>& records) {
  std::string out;
  for (const auto& r : records) {
    out += serialize_record(model, r);
    out += '\n';
  }
  return out;
}

}  // namespace sift
