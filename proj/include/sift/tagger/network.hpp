#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sift/tagger/embedding.hpp"

namespace sift::tagger {

enum class ArchKind : std::uint8_t { Recurrent, Windowed };

// Layer sizes. Recurrent (MA): stacked LSTM, dropout between LSTM layers,
// then hidden -> dense (ReLU) -> dropout -> head (ReLU) -> activities.
// Windowed (MB_K): the K most recent event vectors concatenated, then a
// ReLU stack `mlp`, then activities.
struct ArchitectureSpec {
  ArchKind kind = ArchKind::Windowed;
  std::size_t num_activities = 0;

  std::size_t hidden = 32;
  std::size_t layers = 3;
  std::size_t dense = 64;
  std::size_t head = 32;
  double dropout = 0.1;

  std::size_t window = 5;
  std::vector<std::size_t> mlp = {128, 256, 128, 32};

  static ArchitectureSpec recurrent(std::size_t num_activities);
  static ArchitectureSpec windowed(std::size_t k, std::size_t num_activities);
  std::string name() const;  // "MA" or "MB_<K>"

  bool operator==(const ArchitectureSpec&) const = default;
};

// A named slice of the flat parameter vector holding a column-major matrix.
struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  bool operator==(const Block&) const = default;
};

struct Sequence {
  std::vector<EncodedEvent> events;
  std::vector<std::uint32_t> labels;  // activity id per event
};

// One windowed training example: the window ending at `position` (0-based).
struct WindowSample {
  const Sequence* sequence = nullptr;
  std::size_t position = 0;
};

// Per-trace inference state: LSTM hidden/cell vectors per layer, or the
// embedded vectors of the K-1 previous events (oldest first).
struct InferenceState {
  std::vector<Eigen::VectorXd> h, c;
  std::vector<Eigen::VectorXd> history;
  std::size_t steps = 0;
};

class Network {
 public:
  Network(ArchitectureSpec spec, EmbeddingConfig embedding);

  const ArchitectureSpec& spec() const { return spec_; }
  const EmbeddingConfig& embedding() const { return embedding_; }
  const std::vector<Block>& layout() const { return layout_; }
  std::size_t num_parameters() const { return static_cast<std::size_t>(params_.size()); }
  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  // Weights uniform in +-1/sqrt(fan_in), learned embedding rows N(0,1).
  void initialize(std::uint64_t seed);

  // Event vector of width embedding().width().
  Eigen::VectorXd embed(const EncodedEvent& e) const;

  // Mean cross-entropy over every step of equally long sequences
  // (recurrent). With `dropout` non-null, dropout masks are drawn from it;
  // with `grad` non-null, the gradient is written there.
  double sequence_loss(std::span<const Sequence* const> batch, Eigen::VectorXd* grad,
                       std::mt19937_64* dropout) const;
  // Mean cross-entropy over windowed samples.
  double window_loss(std::span<const WindowSample> batch, Eigen::VectorXd* grad) const;
  // Either of the above, by architecture: every step of every sequence.
  double loss(std::span<const Sequence* const> batch, Eigen::VectorXd* grad, std::mt19937_64* dropout) const;

  InferenceState initial_state() const;
  // Advances the state by one event; returns the activity distribution.
  Eigen::VectorXd step(InferenceState& state, const EncodedEvent& e) const;

 private:
  std::size_t add_block(const std::string& name, std::size_t rows, std::size_t cols, double bound);
  Eigen::Map<const Eigen::MatrixXd> mat(std::size_t block) const;
  Eigen::Map<Eigen::MatrixXd> mat(Eigen::VectorXd& v, std::size_t block) const;
  void embed_into(const EncodedEvent& e, double* out) const;
  void scatter_embedding(const EncodedEvent& e, const double* grad_in, Eigen::VectorXd& grad) const;
  Eigen::MatrixXd window_input(std::span<const WindowSample> batch) const;

  ArchitectureSpec spec_;
  EmbeddingConfig embedding_;
  std::vector<Block> layout_;
  std::vector<double> init_bound_;  // per block; <= 0 draws N(0,1)
  Eigen::VectorXd params_;

  std::vector<std::size_t> table_block_;  // per field, learned table block or npos
  std::vector<std::size_t> field_offset_;  // per field, offset inside the event vector
  std::vector<std::size_t> lstm_w_, lstm_u_, lstm_b_;
  std::vector<std::size_t> dense_w_, dense_b_;  // head / mlp layers in order
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
  double loss = 0.0;
};

// Central finite differences (h = 1e-4) against the analytic gradient over
// every parameter of a small network on a random batch. The relative error
// of one component is |a - n| / max(|a|, |n|, 1e-6).
GradientCheckResult gradient_check(const ArchitectureSpec& spec, std::uint64_t seed);

}  // namespace sift::tagger
