#include "mmsurv/stats/dichotomize.hpp"

namespace mmsurv::stats {

std::vector<RiskGroup> dichotomize(std::span<const SurvCurve> curves, double threshold_months) {
  std::vector<RiskGroup> out;
  out.reserve(curves.size());
  for (const auto& c : curves) {
    out.push_back(c.at(threshold_months) >= 0.5 ? RiskGroup::favorable : RiskGroup::unfavorable);
  }
  return out;
}

}  // namespace mmsurv::stats
