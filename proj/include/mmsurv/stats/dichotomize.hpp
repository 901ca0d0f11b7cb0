#pragma once

#include <span>
#include <vector>

#include "mmsurv/stats/surv_curve.hpp"

namespace mmsurv::stats {

enum class RiskGroup { favorable, unfavorable };

// Favorable iff the predicted S(threshold) >= 0.5.
std::vector<RiskGroup> dichotomize(std::span<const SurvCurve> curves, double threshold_months);

}  // namespace mmsurv::stats
