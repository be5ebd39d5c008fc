#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sift/core/types.hpp"

namespace sift {

// Which event types can arise as which life-cycle steps of which
// activities. Stored as a dense |E| x |A| table of 4-bit step masks.
class TypeLevelMapping {
 public:
  TypeLevelMapping() = default;
  TypeLevelMapping(std::size_t num_event_types, std::size_t num_activities);

  // Throws SchemaError on out-of-range ids, ContractError on duplicates.
  void add(EventTypeId et, ActivityId a, StepType s);
  bool contains(EventTypeId et, ActivityId a, StepType s) const;

  // Activities with at least one step for `et`, ascending by id.
  std::vector<ActivityId> cand_act(EventTypeId et) const;
  // (activity, step) pairs for `et`, ordered by (activity id, step).
  std::vector<std::pair<ActivityId, StepType>> cand_steps(EventTypeId et) const;

  std::size_t num_event_types() const { return num_event_types_; }
  std::size_t num_activities() const { return num_activities_; }
  std::size_t num_triples() const { return triples_; }
  // Largest |cand_act(et)| over all event types.
  std::size_t max_degree() const;

  bool operator==(const TypeLevelMapping&) const = default;

 private:
  std::uint8_t mask(EventTypeId et, ActivityId a) const;
  void check(EventTypeId et) const;

  std::size_t num_event_types_ = 0;
  std::size_t num_activities_ = 0;
  std::size_t triples_ = 0;
  std::vector<std::uint8_t> masks_;
};

enum class ConstraintKind : std::uint8_t { Must, Not, Precedence, NegPrecedence };

std::string_view to_string(ConstraintKind k);
std::optional<ConstraintKind> parse_constraint_kind(std::string_view text);

// Windowed temporal rule. Shapes:
//   Must          lhs={A}        rhs={B1..Bk}   A =>_T B1|..|Bk
//   Not           lhs={A}        rhs={B}        A =>_T not B
//   Precedence    lhs={A1..Ak}   rhs={B}        A1|..|Ak <=_T B
//   NegPrecedence lhs={A}        rhs={B}        not A <=_T B
// An absent window is unbounded.
struct Constraint {
  ConstraintKind kind = ConstraintKind::Must;
  std::vector<ActivityId> lhs;
  std::vector<ActivityId> rhs;
  std::optional<std::uint32_t> window;

  bool operator==(const Constraint&) const = default;

  // idx in (from, from+T]
  bool in_window_after(std::size_t from, std::size_t idx) const {
    return idx > from && (!window || idx <= from + *window);
  }
  // idx in [at-T, at)
  bool in_window_before(std::size_t idx, std::size_t at) const {
    return idx < at && (!window || idx + *window >= at);
  }
};

struct DeclarativeProcessModel {
  std::vector<bool> start_acts;                        // indexed by activity
  std::vector<std::optional<std::uint32_t>> max_inst;  // nullopt = unbounded
  std::vector<Constraint> constraints;

  bool is_start(ActivityId a) const { return start_acts.at(a.value); }
  // min(max_inst(a), idx): the largest instance number an event at 1-based
  // position idx can carry.
  std::uint32_t instance_cap(ActivityId a, std::size_t idx) const;

  bool operator==(const DeclarativeProcessModel&) const = default;
};

// The full domain knowledge for one process: universes, mapping, model.
struct DomainModel {
  Vocabulary activities;
  Vocabulary event_types;
  TypeLevelMapping mapping;
  DeclarativeProcessModel process;

  std::size_t num_activities() const { return activities.size(); }
  std::size_t num_event_types() const { return event_types.size(); }

  ActivityId activity(std::string_view name) const;     // SchemaError if unknown
  EventTypeId event_type(std::string_view name) const;  // SchemaError if unknown

  // Checks every invariant of the mapping and model; throws ParseError with
  // a field locus on the first violation.
  void validate() const;

  bool operator==(const DomainModel&) const = default;
};

// Model-file (JSON) reader/writer. The writer is canonical: object keys are
// sorted, mapping entries and start activities are sorted by name, steps by
// life-cycle order. Activity, event-type, and constraint order is preserved
// because it fixes the dense ids.
DomainModel parse_model(std::string_view document);
std::string serialize_model(const DomainModel& model);
DomainModel load_model(const std::string& path);

}  // namespace sift
