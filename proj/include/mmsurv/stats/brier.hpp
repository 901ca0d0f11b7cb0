#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "mmsurv/records.hpp"
#include "mmsurv/stats/surv_curve.hpp"

namespace mmsurv::stats {

// Censoring weights below this are treated as unusable.
inline constexpr double kMinCensoringWeight = 1e-6;

struct BrierResult {
  double value = 0.0;
  // Patients dropped because their censoring survival fell below
  // kMinCensoringWeight.
  std::size_t excluded = 0;
};

// IPCW (Graf) Brier score at time t. `censor_km` is the Kaplan-Meier estimate
// of the censoring distribution on the same cohort.
BrierResult brier(std::span<const SurvCurve> curves, std::span<const EventRecord> records, double t,
                  const SurvCurve& censor_km);

// Trapezoid rule over t = 0, 1, ..., floor(t_max) (plus t_max itself when it
// is fractional), divided by t_max.
double integrate_monthly(const std::function<double(double)>& f, double t_max);

// Integrated Brier score over [0, t_max] with the censoring curve fitted on
// `records`.
double integrated_brier(std::span<const SurvCurve> curves, std::span<const EventRecord> records,
                        double t_max);

}  // namespace mmsurv::stats
