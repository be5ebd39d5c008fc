#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace sift {

// Dense integer handle tagged by the universe it belongs to.
template <typename Tag>
struct StrongId {
  std::uint32_t value = 0;

  constexpr StrongId() = default;
  constexpr explicit StrongId(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const StrongId&) const = default;
};

struct ActivityTag;
struct EventTypeTag;
using ActivityId = StrongId<ActivityTag>;
using EventTypeId = StrongId<EventTypeTag>;

// Life-cycle position of an event inside an activity instance.
enum class StepType : std::uint8_t { First = 0, Intermediate = 1, Last = 2, FirstAndLast = 3 };

inline constexpr StepType kAllSteps[] = {StepType::First, StepType::Intermediate, StepType::Last,
                                         StepType::FirstAndLast};

constexpr bool is_opening(StepType s) { return s == StepType::First || s == StepType::FirstAndLast; }
constexpr bool is_closing(StepType s) { return s == StepType::Last || s == StepType::FirstAndLast; }

std::string_view to_string(StepType s);
// Accepts "first", "intermediate", "last", "first&last" (also "firstandlast"
// and "first_and_last"), case-insensitive.
std::optional<StepType> parse_step(std::string_view text);

// Name <-> dense id table for one universe (activities or event types).
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  // Appends a new name; throws SchemaError on duplicates.
  std::uint32_t add(std::string name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

using AttributeValue = std::variant<std::string, double>;

struct Attribute {
  std::string name;
  AttributeValue value;

  bool operator==(const Attribute&) const = default;
};

struct Event {
  std::size_t index = 0;  // 1-based position in the trace
  EventTypeId type;
  std::vector<Attribute> attrs;

  bool operator==(const Event&) const = default;
};

struct Trace {
  std::string id;
  std::vector<Event> events;
  bool finalized = false;

  std::size_t size() const { return events.size(); }
  bool operator==(const Trace&) const = default;
};

// Builds a trace with contiguous 1-based indices from bare event types.
Trace make_trace(std::string id, const std::vector<EventTypeId>& types, bool finalized);

// One event's reading: the event is step `step` of the `instance`-th
// execution of `activity`.
struct Assignment {
  ActivityId activity;
  StepType step = StepType::First;
  std::uint32_t instance = 1;

  auto operator<=>(const Assignment&) const = default;
};

// Position i of the vector describes event i+1.
using Interpretation = std::vector<Assignment>;

}  // namespace sift

template <typename Tag>
struct std::hash<sift::StrongId<Tag>> {
  std::size_t operator()(const sift::StrongId<Tag>& id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
