#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sift/core/dataset.hpp"
#include "sift/core/types.hpp"
#include "sift/tagger/network.hpp"

namespace sift::tagger {

using DecodingState = InferenceState;

// Per-event activity distributions for one trace at a time. Implementations
// are immutable after construction; all per-trace state lives in the
// DecodingState.
class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual std::size_t num_activities() const = 0;
  virtual DecodingState init() const = 0;
  // Distribution over activity ids; advances the state by one event.
  virtual Eigen::VectorXd predict(DecodingState& state, const Event& e) const = 0;
};

// Equal mass on every activity.
class UniformTagger final : public Tagger {
 public:
  explicit UniformTagger(std::size_t num_activities);
  std::size_t num_activities() const override { return n_; }
  DecodingState init() const override { return {}; }
  Eigen::VectorXd predict(DecodingState& state, const Event& e) const override;

 private:
  std::size_t n_;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  std::size_t train_traces = 0;
  std::size_t validation_traces = 0;
  std::vector<double> train_loss;       // per epoch, mean over training events
  std::vector<double> validation_loss;  // per epoch; empty without a validation set

  bool operator==(const TrainingMetadata&) const = default;
};

class TrainedTagger final : public Tagger {
 public:
  TrainedTagger(Network network, std::vector<std::string> activities, TrainingMetadata metadata);

  std::size_t num_activities() const override { return network_.spec().num_activities; }
  DecodingState init() const override { return network_.initial_state(); }
  // Dropout is never applied here. Throws ContractError for an event type
  // outside the embedding's universe.
  Eigen::VectorXd predict(DecodingState& state, const Event& e) const override;

  const Network& network() const { return network_; }
  const std::vector<std::string>& activities() const { return activities_; }
  const TrainingMetadata& metadata() const { return metadata_; }

 private:
  Network network_;
  std::vector<std::string> activities_;
  TrainingMetadata metadata_;
};

struct TrainingOptions {
  std::size_t epochs = 0;  // 0: 10 for MA, 50 for MB
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  // Called after every epoch with (epoch, train loss, validation loss or NaN).
  std::function<void(std::size_t, double, double)> on_epoch;
};

// Activity-only supervision for one trace.
Sequence to_sequence(const EmbeddingConfig& cfg, const LabeledTrace& record);

// Adam on mean cross-entropy. MA: whole-trace BPTT, batches drawn from
// traces of equal length. MB: shuffled window samples. Deterministic given
// options.seed. Throws ContractError on an empty training set, unlabeled
// records, or labels outside spec.num_activities.
TrainedTagger train(const ArchitectureSpec& spec, const EmbeddingConfig& cfg, std::vector<std::string> activities,
                    std::span<const LabeledTrace> training, std::span<const LabeledTrace> validation,
                    const TrainingOptions& options);

// Fraction of events whose argmax prediction (ties to the lower id) equals
// the label.
double tagging_accuracy(const Tagger& tagger, std::span<const LabeledTrace> records);

// Index of the largest entry, ties to the lower index.
std::uint32_t argmax(const Eigen::VectorXd& v);

// Versioned JSON document: architecture, embedding, activity names,
// parameter vector, training metadata. Doubles round-trip exactly.
std::string serialize_tagger(const TrainedTagger& tagger);
TrainedTagger parse_tagger(std::string_view document);
void save_tagger(const TrainedTagger& tagger, const std::string& path);
TrainedTagger load_tagger(const std::string& path);

}  // namespace sift::tagger
