#include <algorithm>
#include <cmath>
#include <vector>

#include "mmsurv/errors.hpp"
#include "mmsurv/stats/tests.hpp"

namespace mmsurv::stats {

double chi_square_sf_1df(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(0.5 * x));
}

TestResult logrank(std::span<const EventRecord> group_a, std::span<const EventRecord> group_b) {
  if (group_a.empty() || group_b.empty()) throw UndefinedMetricError("logrank: both groups must be non-empty");
  validate_records(group_a);
  validate_records(group_b);

  struct Row {
    double time;
    int event;
    int group;
  };
  std::vector<Row> rows;
  for (const auto& r : group_a) rows.push_back({r.time, r.event, 0});
  for (const auto& r : group_b) rows.push_back({r.time, r.event, 1});
  std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.time < y.time; });

  double n_a = static_cast<double>(group_a.size()), n = static_cast<double>(rows.size());
  double observed_minus_expected = 0.0, variance = 0.0;
  std::size_t total_events = 0;
  for (std::size_t i = 0; i < rows.size();) {
    const double t = rows[i].time;
    double d = 0, d_a = 0, leave = 0, leave_a = 0;
    for (; i < rows.size() && rows[i].time == t; ++i) {
      leave += 1;
      if (rows[i].group == 0) leave_a += 1;
      if (rows[i].event) {
        d += 1;
        if (rows[i].group == 0) d_a += 1;
      }
    }
    if (d > 0) {
      observed_minus_expected += d_a - d * n_a / n;
      if (n > 1) variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1.0);
      total_events += static_cast<std::size_t>(d);
    }
    n -= leave;
    n_a -= leave_a;
  }
  if (total_events == 0) throw UndefinedMetricError("logrank: no events");
  if (variance <= 0.0) throw UndefinedMetricError("logrank: zero variance");
  TestResult res;
  res.statistic = observed_minus_expected * observed_minus_expected / variance;
  res.df = 1;
  res.p_value = chi_square_sf_1df(res.statistic);
  return res;
}

}  // namespace mmsurv::stats
