#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sift/core/dataset.hpp"
#include "sift/core/model.hpp"

namespace sift::synth {

// Shape of a generated SYN-style domain model.
struct SynModelSpec {
  std::uint32_t activities = 16;
  std::uint32_t event_types = 16;
  std::uint32_t min_degree = 1;  // activities per event type
  std::uint32_t max_degree = 5;
  double mean_degree = 2.5;
  double mean_tolerance = 0.5;
  std::uint32_t must = 6;
  std::uint32_t not_ = 4;
  std::uint32_t precedence = 2;
  std::uint32_t neg_precedence = 0;
  std::uint32_t min_window = 2;
  std::uint32_t max_window = 8;
  std::uint32_t start_activities = 2;
  std::uint32_t max_instances = 5;
  // Each listed length must admit a generated trace before a model is
  // accepted.
  std::vector<std::size_t> trial_lengths = {20, 40, 60};
  std::size_t max_resamples = 100;
};

// Knobs of the trace simulator.
struct TraceOptions {
  std::uint32_t min_instance_length = 1;
  std::uint32_t max_instance_length = 5;
  std::uint32_t min_concurrency = 1;  // open instances at once, sampled per trace
  std::uint32_t max_concurrency = 3;
  std::size_t retries = 10'000;          // restarts before giving up
  std::size_t nodes_per_attempt = 4'000;  // search nodes per restart
};

// Samples a model meeting the counts exactly and the mean degree within
// tolerance; resamples until every trial length is generable. Throws
// InfeasibleError after max_resamples failures.
DomainModel generate_syn_model(const SynModelSpec& spec, std::uint64_t seed);

// A finalized trace of exactly `length` events with a valid ground-truth
// interpretation. Concurrent instances are simulated step by step with
// depth-first backtracking over moves (advance an open instance, or open a
// new one with a planned length); a prefix is kept only while it stays
// valid and all open instances can still close in the remaining slots.
// Throws InfeasibleError when the retry budget runs out or the search
// space is exhausted.
LabeledTrace generate_trace(const DomainModel& model, std::size_t length, std::mt19937_64& rng,
                            const TraceOptions& options = {});

struct DatasetSpec {
  std::map<std::size_t, std::size_t> counts;  // trace length -> number of traces
  std::uint64_t seed = 1;
  TraceOptions trace;
};

// Traces ordered by length, then by number; trace i of length L is drawn
// from its own generator seeded by (seed, L, i).
std::vector<LabeledTrace> generate_dataset(const DomainModel& model, const DatasetSpec& spec);

// Writes the JSON-lines dataset to `path` and a sidecar `path`.manifest.json
// holding the seed, spec, census and crc32 checksums of the dataset and
// model. Returns the manifest text.
std::string write_dataset(const DomainModel& model, const DatasetSpec& spec, const std::vector<LabeledTrace>& data,
                          const std::string& path);

// Parses "20:100,40:100" into {20:100, 40:100}. Throws ParseError.
std::map<std::size_t, std::size_t> parse_length_counts(const std::string& text);

std::uint32_t crc32_of(const std::string& bytes);

}  // namespace sift::synth
