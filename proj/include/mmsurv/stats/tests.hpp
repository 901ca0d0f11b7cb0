#pragma once

#include <cstddef>
#include <span>

#include "mmsurv/records.hpp"

namespace mmsurv::stats {

struct TestResult {
  double statistic = 0.0;
  std::size_t df = 1;
  double p_value = 1.0;
};

// Upper tail of the chi-square distribution with one degree of freedom.
double chi_square_sf_1df(double x);

// Two-group logrank test (1 df). Throws UndefinedMetricError when a group is
// empty or there are no events.
TestResult logrank(std::span<const EventRecord> group_a, std::span<const EventRecord> group_b);

}  // namespace mmsurv::stats
