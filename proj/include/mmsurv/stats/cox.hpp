#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mmsurv/records.hpp"
#include "mmsurv/stats/surv_curve.hpp"

namespace mmsurv::stats {

enum class TieMethod { breslow, efron };

struct CoxOptions {
  TieMethod ties = TieMethod::breslow;
  int max_iterations = 50;
  // Convergence: max |gradient| below this and a vanishing Newton step.
  double gradient_tolerance = 1e-8;
};

struct PartialLikelihood {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Log partial likelihood with its gradient and Hessian at `beta`.
PartialLikelihood cox_partial_likelihood(const Eigen::MatrixXd& x, std::span<const EventRecord> records,
                                         const Eigen::VectorXd& beta, TieMethod ties = TieMethod::breslow);

struct CoxFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;  // observed information at beta
  Eigen::MatrixXd covariance;   // inverse information
  double log_likelihood = 0.0;
  int iterations = 0;
  std::vector<double> gradient_history;  // max |gradient| per iteration
  TieMethod ties = TieMethod::breslow;

  Eigen::VectorXd standard_errors() const;
};

// Newton-Raphson with step halving. Throws DegenerateInputError for n <= q, a
// constant column or a singular information matrix, and ConvergenceError when
// the iteration cap is reached (e.g. monotone likelihood).
CoxFit fit_coxph(const Eigen::MatrixXd& x, std::span<const EventRecord> records, CoxOptions options = {});

// Breslow cumulative baseline hazard as a step function.
struct BaselineHazard {
  std::vector<double> times;
  std::vector<double> cumulative;
  double at(double t) const;
};

BaselineHazard breslow_baseline(const CoxFit& fit, const Eigen::MatrixXd& x,
                                std::span<const EventRecord> records);

// S(t | x) = exp(-H0(t) exp(x beta)) as a step curve.
SurvCurve cox_survival(const BaselineHazard& baseline, const CoxFit& fit, const Eigen::VectorXd& x_row);

}  // namespace mmsurv::stats
