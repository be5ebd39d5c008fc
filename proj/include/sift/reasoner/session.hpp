#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sift/aaf/framework.hpp"
#include "sift/aaf/solver.hpp"
#include "sift/core/model.hpp"
#include "sift/core/types.hpp"

namespace sift::reasoner {

// Claim that event `index` is step `step` of the `instance`-th execution of
// `activity`.
struct InterpretationArgument {
  std::size_t index = 0;
  ActivityId activity;
  StepType step = StepType::First;
  std::uint32_t instance = 1;

  bool operator==(const InterpretationArgument&) const = default;
};

// Canonical order: (activity, step, instance), then index.
bool canonical_less(const InterpretationArgument& x, const InterpretationArgument& y);

enum class ArgumentKind : std::uint8_t {
  Interpretation,
  NotInterpreted,       // event `index` has no reading
  NotEnoughExecutions,  // opening of instance j>1 without an earlier opening of j-1
  NotStarted,           // non-opening step without an earlier opening
  NotEnded,             // opened instance never closed (finalized traces)
  MustViolation,        // closing at `index` not followed in time by a required opening
  PrecedenceViolation,  // opening at `index` not preceded in time by a required closing
};

std::string_view to_string(ArgumentKind k);

// Payload of one framework argument. Fields not meaningful for a kind stay
// at their defaults; `target` names the attacked interpretation argument
// for NotEnoughExecutions and NotStarted.
struct ArgumentInfo {
  ArgumentKind kind = ArgumentKind::Interpretation;
  std::size_t index = 0;
  ActivityId activity;
  StepType step = StepType::First;
  std::uint32_t instance = 0;
  std::size_t constraint = 0;
  std::optional<aaf::ArgumentId> target;

  InterpretationArgument interpretation() const { return {index, activity, step, instance}; }
};

enum class Semantics : std::uint8_t { Credulous, Skeptical };

// Interpretation query over one event. A missing step or instance is a
// wildcard; a missing activity matches every activity.
struct InterpretationQuery {
  std::size_t index = 0;
  std::optional<ActivityId> activity;
  std::optional<StepType> step;
  std::optional<std::uint32_t> instance;
  Semantics semantics = Semantics::Credulous;

  bool is_boolean() const { return activity && step && instance; }
};

struct Answer {
  bool boolean_form = false;
  bool yes = false;                                // boolean form
  std::vector<InterpretationArgument> arguments;  // wildcard form, canonical order
};

enum class ReasonKind : std::uint8_t {
  Mapping,                    // no (event type, activity, step) triple
  Start,                      // event 1 must open instance 1 of a start activity
  InstanceLimit,              // instance beyond min(maxInst, index)
  NotCandidate,               // activity left out of the event's candidate set
  ConflictingInterpretation,  // readings of a neighbouring event that exclude the query
  Uninterpretable,            // a neighbouring event has no compatible reading
  NotStarted,
  NotEnoughExecutions,
  NotEnded,
  UnmetMust,
  UnmetPrecedence,
};

std::string_view to_string(ReasonKind k);

struct InvalidityReason {
  ReasonKind kind = ReasonKind::Mapping;
  std::vector<std::size_t> indices;                // related event positions
  std::optional<std::size_t> constraint;           // index into the model's constraints
  std::vector<InterpretationArgument> conflicts;  // for ConflictingInterpretation

  bool operator==(const InvalidityReason&) const = default;
};

// A pending Must instantiation: closing readings of lhs at `index` whose
// window has not yet been fully observed.
struct PendingMust {
  std::size_t constraint = 0;
  std::size_t index = 0;

  bool operator==(const PendingMust&) const = default;
};

// Opaque restore point. Valid for set_aaf only on the session that produced
// it and only while it lies on that session's current history.
struct FrameworkSnapshot {
  std::uint64_t session = 0;
  std::size_t depth = 0;
  std::uint64_t stamp = 0;
  aaf::Framework::Mark mark;
  std::size_t prefix_length = 0;
  bool finalized = false;
  std::vector<PendingMust> pending;

  bool operator==(const FrameworkSnapshot&) const = default;
};

struct Census {
  std::size_t arguments = 0;
  std::size_t attacks = 0;
  std::map<ArgumentKind, std::size_t> by_kind;

  bool operator==(const Census&) const = default;
};

// One running trace and its argumentation framework, grown event by event.
// Not thread-safe; callers serialize access per session.
class Session {
 public:
  explicit Session(std::shared_ptr<const DomainModel> model, aaf::SolverOptions solver = {});

  const DomainModel& model() const { return *model_; }
  std::shared_ptr<const DomainModel> model_ptr() const { return model_; }
  std::size_t length() const { return events_.size(); }
  bool finalized() const { return finalized_; }
  const std::vector<Event>& events() const { return events_; }

  // Appends `e` (whose index must be length()+1) and extends the framework.
  // Only activities in `candidates` get interpretation arguments.
  void update_aaf(const Event& e, std::span<const ActivityId> candidates);
  // Same, with every activity of cand_act(e-type(e)) as candidate.
  void update_aaf(const Event& e);

  FrameworkSnapshot get_aaf() const;
  void set_aaf(const FrameworkSnapshot& snap);

  // Marks the trace as terminated: unclosed instances and truncated Must
  // windows become decidable.
  void finalize();

  Answer answer(const InterpretationQuery& q);
  // Whether any reading of `activity` at `index` is credulously accepted.
  bool has_accepted(std::size_t index, ActivityId activity);
  // Every credulously accepted interpretation argument at `index`.
  std::vector<InterpretationArgument> accepted_at(std::size_t index);
  bool credulous(const InterpretationArgument& arg);
  bool skeptical(const InterpretationArgument& arg);

  // Reasons why the fully specified query is not credulously accepted;
  // empty when it is. Wildcards are a contract error.
  std::vector<InvalidityReason> explain(const InterpretationQuery& q);
  // Reasons covering every reading of `activity` at `index`: empty if some
  // reading is accepted.
  std::vector<InvalidityReason> explain_activity(std::size_t index, ActivityId activity);

  const aaf::Framework& framework() const { return framework_; }
  const ArgumentInfo& info(aaf::ArgumentId a) const { return infos_.at(a.value); }
  std::optional<aaf::ArgumentId> find(const InterpretationArgument& arg) const;
  std::span<const aaf::ArgumentId> arguments_at(std::size_t index) const;
  const std::vector<PendingMust>& pending() const { return pending_; }
  Census census() const;

 private:
  struct EventArgs {
    aaf::ArgumentId not_interpreted;
    std::vector<aaf::ArgumentId> ids;  // interpretation arguments
  };
  // Argument lists indexed for attack construction; each push is logged so
  // truncation can unwind them.
  struct InstanceLists {
    std::vector<std::uint32_t> openings, closings, all;
  };

  aaf::ArgumentId add(const ArgumentInfo& info);
  void push(std::vector<std::uint32_t>& list, std::uint32_t id);
  InstanceLists& lists(ActivityId a, std::uint32_t j);
  void instantiate_must(const PendingMust& p, std::size_t end);
  void mutated();
  void check_index(std::size_t index) const;
  aaf::Solver& solver();
  void remember(const aaf::ArgumentSet& ext);
  // Whether some argument of `candidates` is credulously accepted; one
  // solver call settles the whole group.
  bool any_accepted(std::span<const aaf::ArgumentId> candidates);
  bool accepted(aaf::ArgumentId a);
  std::vector<InvalidityReason> explain_argument(aaf::ArgumentId alpha);

  std::shared_ptr<const DomainModel> model_;
  aaf::SolverOptions solver_options_;
  std::uint64_t uid_;

  aaf::Framework framework_;
  std::vector<ArgumentInfo> infos_;
  std::vector<Event> events_;
  std::vector<EventArgs> per_event_;
  bool finalized_ = false;
  std::vector<PendingMust> pending_;

  std::map<std::pair<std::uint32_t, std::uint32_t>, InstanceLists> instances_;
  std::vector<std::vector<std::uint32_t>> openings_by_activity_;
  std::vector<std::vector<std::uint32_t>> closings_by_activity_;
  std::vector<std::vector<std::uint32_t>*> push_log_;

  std::vector<std::uint64_t> history_;  // state stamp per mutation depth
  std::uint64_t next_stamp_ = 1;

  std::unique_ptr<aaf::Solver> solver_;
  std::vector<std::int8_t> cache_;   // 1 accepted, 0 rejected, -1 unknown
  std::vector<std::uint8_t> hint_;   // members of the last admissible set found
};

}  // namespace sift::reasoner
