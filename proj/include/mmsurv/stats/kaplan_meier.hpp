#pragma once

#include <optional>
#include <span>

#include "mmsurv/records.hpp"
#include "mmsurv/stats/surv_curve.hpp"

namespace mmsurv::stats {

// Product-limit estimator. Knots at distinct event times; censored patients
// leave the risk set without a drop.
SurvCurve kaplan_meier(std::span<const EventRecord> records);

// Kaplan-Meier of the censoring distribution (event/censor roles swapped).
SurvCurve censoring_kaplan_meier(std::span<const EventRecord> records);

// Smallest knot time with S(t) <= 0.5; empty if the curve never gets there.
std::optional<double> median_survival(const SurvCurve& curve);

}  // namespace mmsurv::stats
