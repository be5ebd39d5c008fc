#include "sift/core/types.hpp"

#include <algorithm>
#include <cctype>

#include "sift/errors.hpp"

namespace sift {

std::string_view to_string(StepType s) {
  switch (s) {
    case StepType::First:
      return "first";
    case StepType::Intermediate:
      return "intermediate";
    case StepType::Last:
      return "last";
    case StepType::FirstAndLast:
      return "first&last";
  }
  return "?";
}

std::optional<StepType> parse_step(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "first") return StepType::First;
  if (lower == "intermediate") return StepType::Intermediate;
  if (lower == "last") return StepType::Last;
  if (lower == "first&last" || lower == "firstandlast" || lower == "first_and_last")
    return StepType::FirstAndLast;
  return std::nullopt;
}

Vocabulary::Vocabulary(std::vector<std::string> names) {
  for (auto& n : names) add(std::move(n));
}

std::uint32_t Vocabulary::add(std::string name) {
  if (index_.count(name) != 0) throw SchemaError("duplicate name '" + name + "'");
  const auto id = static_cast<std::uint32_t>(names_.size());
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::name(std::uint32_t id) const {
  if (id >= names_.size()) throw SchemaError("id " + std::to_string(id) + " out of range");
  return names_[id];
}

Trace make_trace(std::string id, const std::vector<EventTypeId>& types, bool finalized) {
  Trace t;
  t.id = std::move(id);
  t.finalized = finalized;
  t.events.reserve(types.size());
  for (std::size_t i = 0; i < types.size(); ++i) {
    t.events.push_back(Event{i + 1, types[i], {}});
  }
  return t;
}

}  // namespace sift
