#include "mmsurv/stats/surv_curve.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mmsurv/records.hpp"

namespace mmsurv {

void validate_record(const EventRecord& r) {
  if (!std::isfinite(r.time) || r.time <= 0.0) {
    throw std::invalid_argument("event time must be finite and positive, got " + std::to_string(r.time));
  }
  if (r.event != 0 && r.event != 1) {
    throw std::invalid_argument("event label must be 0 or 1, got " + std::to_string(r.event));
  }
}

void validate_records(std::span<const EventRecord> records) {
  for (const auto& r : records) validate_record(r);
}

std::vector<double> record_times(std::span<const EventRecord> records) {
  std::vector<double> t;
  t.reserve(records.size());
  for (const auto& r : records) t.push_back(r.time);
  return t;
}

}  // namespace mmsurv

namespace mmsurv::stats {

SurvCurve::SurvCurve(std::vector<double> times, std::vector<double> values, Interpolation kind)
    : times_(std::move(times)), values_(std::move(values)), kind_(kind) {
  if (times_.size() != values_.size()) throw std::invalid_argument("SurvCurve: times/values length mismatch");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!std::isfinite(times_[i]) || !std::isfinite(values_[i])) {
      throw std::invalid_argument("SurvCurve: non-finite knot");
    }
    if (values_[i] < 0.0 || values_[i] > 1.0) throw std::invalid_argument("SurvCurve: value outside [0,1]");
    if (i && times_[i] <= times_[i - 1]) throw std::invalid_argument("SurvCurve: times not increasing");
    if (i && values_[i] > values_[i - 1]) throw std::invalid_argument("SurvCurve: values increase");
  }
  if (kind_ == Interpolation::linear && (times_.empty() || times_[0] != 0.0 || values_[0] != 1.0)) {
    throw std::invalid_argument("SurvCurve: linear curve must start at (0, 1)");
  }
}

double SurvCurve::at(double t) const {
  if (times_.empty()) return 1.0;
  if (kind_ == Interpolation::step) {
    // last knot with time <= t
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return 1.0;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }
  if (t <= 0.0) return 1.0;
  if (t >= times_.back()) return values_.back();
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
  return values_[lo] + w * (values_[hi] - values_[lo]);
}

double SurvCurve::left_limit(double t) const {
  if (kind_ == Interpolation::linear || times_.empty()) return at(t);
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 1.0;
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

}  // namespace mmsurv::stats
