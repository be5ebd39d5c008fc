#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sift/core/model.hpp"
#include "sift/core/types.hpp"

namespace sift {

// A trace with its ground-truth interpretation (one assignment per event).
struct LabeledTrace {
  Trace trace;
  Interpretation labels;

  bool operator==(const LabeledTrace&) const = default;
};

// One dataset record per line:
//   {"id":..., "events":[{"type":"BS","attrs":{...}}],
//    "labels":[{"activity":"A1","step":"first","instance":1}], "finalized":true}
// Names resolve against `model`. Labels may be absent (unlabeled trace).
std::string serialize_record(const DomainModel& model, const LabeledTrace& record);
LabeledTrace parse_record(const DomainModel& model, std::string_view line, std::size_t line_no = 0);

// Whole JSON-lines files. Blank lines are skipped; ParseError loci are
// "line N".
std::vector<LabeledTrace> parse_dataset(const DomainModel& model, std::string_view text);
std::vector<LabeledTrace> load_dataset(const DomainModel& model, const std::string& path);
std::string serialize_dataset(const DomainModel& model, const std::vector<LabeledTrace>& records);

}  // namespace sift
