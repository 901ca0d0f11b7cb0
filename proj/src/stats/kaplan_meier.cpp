#include "mmsurv/stats/kaplan_meier.hpp"

#include <algorithm>
#include <vector>

namespace mmsurv::stats {

namespace {

SurvCurve product_limit(std::span<const EventRecord> records, bool count_censorings) {
  validate_records(records);
  std::vector<EventRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const EventRecord& a, const EventRecord& b) { return a.time < b.time; });
  std::vector<double> times, values;
  double s = 1.0;
  std::size_t at_risk = sorted.size();
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].time;
    std::size_t hits = 0, leaving = 0;
    while (i < sorted.size() && sorted[i].time == t) {
      const bool hit = count_censorings ? sorted[i].event == 0 : sorted[i].event == 1;
      hits += hit ? 1 : 0;
      ++leaving;
      ++i;
    }
    if (hits) {
      s *= 1.0 - static_cast<double>(hits) / static_cast<double>(at_risk);
      times.push_back(t);
      values.push_back(s);
    }
    at_risk -= leaving;
  }
  return {std::move(times), std::move(values), Interpolation::step};
}

}  // namespace

SurvCurve kaplan_meier(std::span<const EventRecord> records) { return product_limit(records, false); }

SurvCurve censoring_kaplan_meier(std::span<const EventRecord> records) {
  return product_limit(records, true);
}

std::optional<double> median_survival(const SurvCurve& curve) {
  for (std::size_t k = 0; k < curve.times().size(); ++k) {
    if (curve.values()[k] <= 0.5) return curve.times()[k];
  }
  return std::nullopt;
}

}  // namespace mmsurv::stats
