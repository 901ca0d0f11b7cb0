#pragma once

#include <vector>

namespace mmsurv::stats {

enum class Interpolation {
  // Right-continuous step function; S(t) = 1 before the first knot.
  step,
  // Piecewise-linear through the knots, constant after the last knot. The
  // first knot must be (0, 1).
  linear,
};

// Survival function defined by knots (times strictly increasing, values
// non-increasing within [0, 1]).
class SurvCurve {
 public:
  // S(t) = 1 everywhere.
  SurvCurve() = default;
  SurvCurve(std::vector<double> times, std::vector<double> values, Interpolation kind);

  double at(double t) const;
  // S(t-) : limit from the left.
  double left_limit(double t) const;

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<double>& values() const noexcept { return values_; }
  Interpolation interpolation() const noexcept { return kind_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  Interpolation kind_ = Interpolation::step;
};

}  // namespace mmsurv::stats
