#pragma once

#include <span>
#include <vector>

namespace mmsurv {

// One patient's observed outcome: time in months since baseline and whether
// the event (death) was observed (1) or the patient was censored (0).
struct EventRecord {
  double time = 0.0;
  int event = 0;
};

// Throws std::invalid_argument unless time is finite and positive and event is 0 or 1.
void validate_record(const EventRecord& r);
void validate_records(std::span<const EventRecord> records);

std::vector<double> record_times(std::span<const EventRecord> records);

}  // namespace mmsurv
