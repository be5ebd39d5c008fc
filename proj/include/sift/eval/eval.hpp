#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sift/aaf/solver.hpp"
#include "sift/core/dataset.hpp"
#include "sift/core/model.hpp"
#include "sift/pipeline/pipeline.hpp"
#include "sift/tagger/tagger.hpp"

namespace sift::eval {

// Accuracies in percent, times in milliseconds per event.
struct MetricsRow {
  std::string arch;
  std::string bucket;  // trace length, or "ALL"
  double fraction = 100.0;
  double acc_t = 0.0, acc_ta = 0.0, acc_tr = 0.0;
  double time_t_ms = 0.0, time_ta_ms = 0.0, time_tr_ms = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  const MetricsRow* find(const std::string& arch, const std::string& bucket, double fraction) const;
  bool operator==(const MetricsTable&) const = default;
};

struct EvalConfig {
  std::string arch = "tagger";
  double fraction = 100.0;
  pipeline::PipelineConfig pipeline;
  aaf::SolverOptions solver;
};

// Per event, the three predictions: T is the argmax of the tagger's
// distribution; T+A the argmax over cand_act(e-type) only; T+R the top of
// the combination loop's ranking (an empty support scores as wrong). Ties
// go to the lower activity id. One row per trace length plus "ALL"
// (event-weighted). Throws ContractError on unlabeled records or a tagger
// whose width differs from |A|.
MetricsTable evaluate(std::span<const LabeledTrace> data, std::shared_ptr<const tagger::Tagger> tagger,
                      std::shared_ptr<const DomainModel> model, const EvalConfig& config);

// Seeded shuffle, then the first round(train_share * n) records train.
std::pair<std::vector<LabeledTrace>, std::vector<LabeledTrace>> split_dataset(std::span<const LabeledTrace> data,
                                                                              double train_share, std::uint64_t seed);

// Seeded subsample of round(percent/100 * n) records (at least one).
std::vector<LabeledTrace> subsample(std::span<const LabeledTrace> data, double percent, std::uint64_t seed);

struct SweepConfig {
  std::vector<double> fractions = {20, 40, 60, 80, 90, 100};
  tagger::ArchitectureSpec arch;
  tagger::EmbeddingConfig embedding;
  tagger::TrainingOptions training;
  std::uint64_t subsample_seed = 1;
  EvalConfig eval;
};

// For each fraction r: trains on an r% subsample of `training`, evaluates
// on `test`. Rows carry fraction r.
MetricsTable sweep_training_fraction(std::span<const LabeledTrace> training, std::span<const LabeledTrace> test,
                                     std::shared_ptr<const DomainModel> model, const SweepConfig& config);

enum class ReportFormat { Csv, PlotData };

// CSV header: arch,bucket,fraction,acc_t,acc_ta,acc_tr,time_t_ms,time_ta_ms,time_tr_ms.
// Plot data is JSON with accuracy-vs-length, accuracy-vs-fraction and
// time-vs-length series. Throws ContractError on an empty table.
std::string emit_report(const MetricsTable& table, ReportFormat format);
MetricsTable parse_csv(std::string_view text);

}  // namespace sift::eval
