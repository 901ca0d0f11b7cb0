#include "mmsurv/stats/brier.hpp"

#include <cmath>
#include <vector>

#include "mmsurv/errors.hpp"
#include "mmsurv/stats/kaplan_meier.hpp"

namespace mmsurv::stats {

BrierResult brier(std::span<const SurvCurve> curves, std::span<const EventRecord> records, double t,
                  const SurvCurve& censor_km) {
  if (curves.size() != records.size()) throw ShapeError("brier: curves and records differ in length");
  if (records.empty()) throw UndefinedMetricError("brier: empty cohort");
  BrierResult res;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const double s = curves[i].at(t);
    if (r.time <= t && r.event) {
      const double g = censor_km.left_limit(r.time);
      if (g < kMinCensoringWeight) {
        ++res.excluded;
        continue;
      }
      total += s * s / g;
    } else if (r.time > t) {
      const double g = censor_km.at(t);
      if (g < kMinCensoringWeight) {
        ++res.excluded;
        continue;
      }
      total += (1.0 - s) * (1.0 - s) / g;
    }
    ++used;  // censored before t: contributes zero but stays in the denominator
  }
  if (used == 0) throw UndefinedMetricError("brier: every patient was excluded");
  res.value = total / static_cast<double>(used);
  return res;
}

double integrate_monthly(const std::function<double(double)>& f, double t_max) {
  if (!(t_max > 0.0)) throw ConfigError("integrated Brier needs t_max > 0");
  std::vector<double> grid;
  for (double t = 0.0; t <= t_max; t += 1.0) grid.push_back(t);
  if (grid.back() < t_max) grid.push_back(t_max);
  double area = 0.0;
  double prev = f(grid[0]);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double cur = f(grid[k]);
    area += 0.5 * (prev + cur) * (grid[k] - grid[k - 1]);
    prev = cur;
  }
  return area / t_max;
}

double integrated_brier(std::span<const SurvCurve> curves, std::span<const EventRecord> records,
                        double t_max) {
  const SurvCurve g = censoring_kaplan_meier(records);
  return integrate_monthly([&](double t) { return brier(curves, records, t, g).value; }, t_max);
}

}  // namespace mmsurv::stats
