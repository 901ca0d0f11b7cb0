#pragma once

#include <span>

#include "mmsurv/records.hpp"
#include "mmsurv/stats/surv_curve.hpp"

namespace mmsurv::stats {

// Antolini time-dependent concordance. A pair (i, j) is comparable when i had
// the event and s_i < s_j; it is concordant when S_i(s_i) < S_j(s_i) and
// counts one half on ties. Throws UndefinedMetricError without comparable
// pairs.
double c_td(std::span<const SurvCurve> curves, std::span<const EventRecord> records);

}  // namespace mmsurv::stats
