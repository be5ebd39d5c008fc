#pragma once

#include <string>

#include "json.hpp"
#include "sift/core/model.hpp"
#include "sift/core/types.hpp"
#include "sift/pipeline/pipeline.hpp"
#include "sift/reasoner/session.hpp"

// JSON mirrors of the library types, with names in place of dense ids.
// Every top-level payload carries "v": kWireVersion.
namespace sift::service {

using json = nlohmann::json;

inline constexpr int kWireVersion = 1;

// {"type": "BloodSample", "attrs": {"ward": "icu", "dose": 2.5}}. The index
// is assigned by the session. Throws ParseError or SchemaError.
Event event_from_json(const DomainModel& model, const json& j);
json event_to_json(const DomainModel& model, const Event& e);

json argument_to_json(const DomainModel& model, const reasoner::InterpretationArgument& a);
json step_result_to_json(const DomainModel& model, const pipeline::StepResult& r);

// {"index": 4, "activity": "A2"?, "step": "last"?, "instance": 1?,
//  "semantics": "credulous"|"skeptical"?}. Missing fields are wildcards.
reasoner::InterpretationQuery query_from_json(const DomainModel& model, const json& j);
json answer_to_json(const DomainModel& model, const reasoner::Answer& a);
json reasons_to_json(const DomainModel& model, const std::vector<reasoner::InvalidityReason>& reasons);
json summary_to_json(const DomainModel& model, const pipeline::Summary& s);

// {"k": 3 | "auto", "gamma": 0.001, "pseudo_count": 1,
//  "denominator": "universe"|"valid", "node_budget": 10000000}
struct SessionConfig {
  pipeline::PipelineConfig pipeline;
  aaf::SolverOptions solver;
};
SessionConfig config_from_json(const json& j);
json config_to_json(const SessionConfig& c);

// Required member of an object, with ParseError naming the field.
const json& field(const json& j, const char* name);

}  // namespace sift::service
