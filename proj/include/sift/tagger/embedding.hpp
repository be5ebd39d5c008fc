#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sift/core/types.hpp"

namespace sift::tagger {

enum class FieldKind : std::uint8_t { EventType, Categorical, Numeric };
enum class FieldMode : std::uint8_t { OneHot, Learned };

// One component of the event vector. The event type is always the first
// field; further fields come from event attributes.
struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::EventType;
  FieldMode mode = FieldMode::OneHot;
  std::size_t dim = 0;                  // learned width
  std::size_t cardinality = 0;          // number of categories
  std::vector<std::string> categories;  // Categorical: value names, id order
  double min = 0.0;                     // Numeric: min-max range
  double max = 1.0;

  std::size_t width() const;
  bool operator==(const FieldSpec&) const = default;
};

struct EmbeddingConfig {
  std::vector<FieldSpec> fields;

  std::size_t width() const;
  bool operator==(const EmbeddingConfig&) const = default;

  // Event type as learned(dim) (or one-hot), string attributes one-hot over
  // the values seen in `traces`, numeric attributes min-max scaled to the
  // observed range. Attribute order follows the first event that has them.
  static EmbeddingConfig for_dataset(std::size_t num_event_types, std::span<const Trace> traces,
                                     FieldMode type_mode = FieldMode::Learned, std::size_t dim = 4);
};

// Event reduced to table lookups and scaled numbers, ready for embedding.
struct EncodedEvent {
  std::vector<std::uint32_t> categories;  // one per EventType/Categorical field
  std::vector<double> numbers;            // one per Numeric field, already in [0,1]

  bool operator==(const EncodedEvent&) const = default;
};

inline constexpr std::uint32_t kUnknownCategory = 0xffffffffu;

// Unknown category values encode as kUnknownCategory (a zero vector);
// missing numeric attributes encode as 0. Throws ContractError for an
// event type outside the configured universe.
EncodedEvent encode(const EmbeddingConfig& cfg, const Event& e);

}  // namespace sift::tagger
