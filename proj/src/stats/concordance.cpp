#include "mmsurv/stats/concordance.hpp"

#include <string>

#include "mmsurv/errors.hpp"

namespace mmsurv::stats {

double c_td(std::span<const SurvCurve> curves, std::span<const EventRecord> records) {
  if (curves.size() != records.size()) throw ShapeError("c_td: curves and records differ in length");
  if (records.size() < 2) throw UndefinedMetricError("c_td needs at least two patients");
  validate_records(records);
  const std::size_t n = records.size();
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!records[i].event) continue;
    const double si = records[i].time;
    const double own = curves[i].at(si);
    for (std::size_t j = 0; j < n; ++j) {
      if (!(si < records[j].time)) continue;
      ++comparable;
      const double other = curves[j].at(si);
      if (own < other) {
        concordant += 1.0;
      } else if (own == other) {
        concordant += 0.5;
      }
    }
  }
  if (comparable == 0) throw UndefinedMetricError("c_td: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

}  // namespace mmsurv::stats
