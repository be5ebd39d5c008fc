#pragma once

#include <string>
#include <vector>

#include "sift/core/model.hpp"
#include "sift/core/types.hpp"

#ifndef SIFT_FIXTURES
#error "SIFT_FIXTURES must point at tests/fixtures"
#endif

namespace sift::testing {

inline DomainModel care() { return load_model(std::string(SIFT_FIXTURES) + "/care.json"); }
inline DomainModel care_restricted() { return load_model(std::string(SIFT_FIXTURES) + "/care_restricted.json"); }

// BloodSample, BloodPressure, Temperature, CannulaInsertion.
inline Trace example_trace(const DomainModel& m, bool finalized = false) {
  return make_trace("example", {m.event_type("BloodSample"), m.event_type("BloodPressure"), m.event_type("Temperature"),
                                m.event_type("CannulaInsertion")},
                    finalized);
}

inline Assignment as(const DomainModel& m, const char* activity, StepType s, std::uint32_t j = 1) {
  return Assignment{m.activity(activity), s, j};
}

}  // namespace sift::testing
