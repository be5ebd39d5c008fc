#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sift/core/model.hpp"
#include "sift/core/types.hpp"

namespace sift {

// Which validity rule an interpretation breaks.
enum class ViolationKind {
  Mapping,            // (e-type, activity, step) not in the mapping
  Start,              // event 1 is not an opening, instance 1, of a start activity
  InstanceStructure,  // step order inside one (activity, instance)
  InstanceOrder,      // instance j opened without an earlier opening of j-1, or j > maxInst
  Must,
  Not,
  Precedence,
  NegPrecedence,
  Unclosed,  // finalized trace with an opened but never closed instance
};

std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  std::vector<std::size_t> indices;     // 1-based event positions involved
  std::optional<std::size_t> constraint;  // index into the model's constraints

  bool operator==(const Violation&) const = default;
};

struct Verdict {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
};

// Ground-truth check of one interpretation against mapping and model.
// Forward-looking Must windows that extend past the end of an open prefix
// are treated as pending (not violated). Throws ContractError if the
// interpretation does not cover every event.
Verdict validate_interpretation(const Trace& trace, const Interpretation& interp, const DomainModel& model);

struct EnumerationResult {
  std::vector<Interpretation> interpretations;  // lexicographic order
  bool overflow = false;                        // budget hit; list is partial
  std::size_t nodes = 0;
};

// Every valid interpretation of `trace`, found by exhaustive search over
// per-event (activity, step, instance) choices with instance <=
// min(maxInst(a), index). Partial assignments are cut as soon as the
// prefix itself is invalid, which is sound because validity is
// prefix-closed for open prefixes. When `candidates` is non-empty it must
// hold one activity set per event and further restricts each event's
// activity choices.
EnumerationResult enumerate_valid(const Trace& trace, const DomainModel& model, std::size_t node_budget = 2'000'000,
                                  std::span<const std::vector<ActivityId>> candidates = {});

}  // namespace sift
