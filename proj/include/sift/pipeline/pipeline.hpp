#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "sift/aaf/solver.hpp"
#include "sift/core/model.hpp"
#include "sift/core/types.hpp"
#include "sift/reasoner/session.hpp"
#include "sift/tagger/tagger.hpp"

namespace sift::pipeline {

// Which activity count divides the smoothed mass: the whole universe or
// only the reasoner-valid set. Both keep the ranking.
enum class SmoothingDenominator : std::uint8_t { Universe, ValidSet };

struct PipelineConfig {
  std::optional<std::size_t> k;  // nullopt: the mapping's max degree
  double gamma = 0.001;
  double pseudo_count = 1.0;  // N
  SmoothingDenominator denominator = SmoothingDenominator::Universe;

  // k resolved against `model`; throws ContractError unless
  // 1 <= k <= |A|, gamma > 0, N > 0.
  std::size_t resolve_k(const DomainModel& model) const;
};

struct RankedActivity {
  ActivityId activity;
  double probability = 0.0;

  bool operator==(const RankedActivity&) const = default;
};

struct StepResult {
  std::size_t index = 0;
  std::vector<RankedActivity> ranked;  // descending probability, ties by id
  bool deviation = false;              // no activity survived filtering
  bool unresolved = false;             // the reasoner hit its budget
  std::vector<ActivityId> valid;       // reasoner-valid activities before the beam cut
  std::vector<double> prediction;      // the tagger's raw distribution

  std::vector<ActivityId> support() const;
  // Highest-ranked activity, if any.
  std::optional<ActivityId> top() const;
  bool operator==(const StepResult&) const = default;
};

// Zeroes entries outside `valid` and maps valid entries to
// (pd[a]*N + gamma) / (N + gamma*D), D = |A| or |valid|. Not normalized.
Eigen::VectorXd smooth_and_filter(const Eigen::VectorXd& pd, std::span<const ActivityId> valid,
                                  const PipelineConfig& cfg);

// Keeps the k largest entries (ties to the lower id), zeroes the rest and
// renormalizes. An all-zero input stays all-zero.
Eigen::VectorXd top_k(const Eigen::VectorXd& v, std::size_t k);

struct EventSummary {
  std::size_t index = 0;
  std::vector<reasoner::InterpretationArgument> accepted;  // after finalization
  std::vector<ActivityId> dropped;  // support activities with no accepted reading any more
  bool top_inconsistent = false;    // the top-ranked activity is among them
};

struct Summary {
  std::vector<EventSummary> events;
  std::vector<std::size_t> inconsistent;  // indices whose top choice no longer holds
  std::vector<std::size_t> deviations;    // indices with no accepted reading at all
};

// One trace being interpreted online: reasoner session plus tagger state.
class Analysis {
 public:
  Analysis(std::shared_ptr<const DomainModel> model, std::shared_ptr<const tagger::Tagger> tagger,
           PipelineConfig config = {}, aaf::SolverOptions solver = {});

  // Runs one step of the combination loop on `e`, whose index must be
  // length()+1 (an index of 0 is filled in). On BudgetExceeded the step is
  // recorded as unresolved with the event kept under its full candidate
  // set, and the exception propagates.
  const StepResult& process_event(Event e);
  // Finalizes the reasoner and reports readings that survived closure.
  Summary finalize();

  std::size_t length() const { return results_.size(); }
  bool finalized() const { return session_.finalized(); }
  std::size_t k() const { return k_; }
  const PipelineConfig& config() const { return config_; }
  const std::vector<StepResult>& results() const { return results_; }
  reasoner::Session& session() { return session_; }
  const reasoner::Session& session() const { return session_; }
  const tagger::Tagger& tagger() const { return *tagger_; }

 private:
  std::shared_ptr<const DomainModel> model_;
  std::shared_ptr<const tagger::Tagger> tagger_;
  PipelineConfig config_;
  std::size_t k_;
  reasoner::Session session_;
  tagger::DecodingState state_;
  std::vector<StepResult> results_;
};

}  // namespace sift::pipeline
