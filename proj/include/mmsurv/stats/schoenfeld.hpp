#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mmsurv/records.hpp"
#include "mmsurv/stats/cox.hpp"
#include "mmsurv/stats/tests.hpp"

namespace mmsurv::stats {

enum class TimeTransform { rank, km };

struct SchoenfeldResiduals {
  std::vector<double> event_times;  // one entry per event, ascending
  Eigen::MatrixXd residuals;        // events x covariates
};

// Breslow Schoenfeld residuals x_i - xbar(t_i) at each event.
SchoenfeldResiduals schoenfeld_residuals(const CoxFit& fit, const Eigen::MatrixXd& x,
                                         std::span<const EventRecord> records);

// Grambsch-Therneau score test for one covariate: correlation between the
// scaled residual column (events * (r V)_j) and the time transform g.
TestResult zph_score_test(std::span<const double> time_transform, std::span<const double> scaled_residual,
                          double variance_jj, std::size_t events);

// Per-covariate proportional-hazards test. Requires at least 5 events.
std::vector<TestResult> schoenfeld_test(const CoxFit& fit, std::span<const EventRecord> records,
                                        const Eigen::MatrixXd& x,
                                        TimeTransform transform = TimeTransform::rank);

}  // namespace mmsurv::stats
