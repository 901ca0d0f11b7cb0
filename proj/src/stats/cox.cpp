#include "mmsurv/stats/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mmsurv/errors.hpp"

namespace mmsurv::stats {

namespace {

void check_design(const Eigen::MatrixXd& x, std::span<const EventRecord> records) {
  if (static_cast<std::size_t>(x.rows()) != records.size()) {
    throw ShapeError("cox: covariate rows (" + std::to_string(x.rows()) + ") differ from records (" +
                     std::to_string(records.size()) + ")");
  }
  if (x.cols() == 0) throw ShapeError("cox: no covariates");
  validate_records(records);
  if (!x.allFinite()) throw NumericError("cox: non-finite covariate");
}

std::vector<std::size_t> order_by_time(std::span<const EventRecord> records) {
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });
  return idx;
}

}  // namespace

PartialLikelihood cox_partial_likelihood(const Eigen::MatrixXd& x, std::span<const EventRecord> records,
                                         const Eigen::VectorXd& beta, TieMethod ties) {
  check_design(x, records);
  const Eigen::Index q = x.cols();
  if (beta.size() != q) throw ShapeError("cox: beta length differs from covariate count");

  const Eigen::VectorXd eta = x * beta;
  const double shift = eta.maxCoeff();
  const auto order = order_by_time(records);

  PartialLikelihood pl;
  pl.gradient = Eigen::VectorXd::Zero(q);
  pl.hessian = Eigen::MatrixXd::Zero(q, q);

  // Risk-set sums, filled while sweeping from the latest time backwards.
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(q, q);

  std::size_t end = order.size();
  while (end > 0) {
    const double t = records[order[end - 1]].time;
    std::size_t begin = end;
    while (begin > 0 && records[order[begin - 1]].time == t) --begin;

    double d0 = 0.0, events = 0.0;
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(q), xsum = Eigen::VectorXd::Zero(q);
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(q, q);
    double eta_sum = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = order[k];
      const Eigen::VectorXd xi = x.row(static_cast<Eigen::Index>(i)).transpose();
      const double w = std::exp(eta[static_cast<Eigen::Index>(i)] - shift);
      s0 += w;
      s1 += w * xi;
      s2 += w * xi * xi.transpose();
      if (records[i].event) {
        events += 1.0;
        d0 += w;
        d1 += w * xi;
        d2 += w * xi * xi.transpose();
        xsum += xi;
        eta_sum += eta[static_cast<Eigen::Index>(i)];
      }
    }
    if (events > 0.0) {
      pl.value += eta_sum;
      pl.gradient += xsum;
      const int terms = ties == TieMethod::efron ? static_cast<int>(events) : 1;
      const double mult = ties == TieMethod::efron ? 1.0 : events;
      for (int l = 0; l < terms; ++l) {
        const double f = ties == TieMethod::efron ? l / events : 0.0;
        const double a0 = s0 - f * d0;
        const Eigen::VectorXd a1 = s1 - f * d1;
        const Eigen::MatrixXd a2 = s2 - f * d2;
        const Eigen::VectorXd mean = a1 / a0;
        pl.value -= mult * (std::log(a0) + shift);
        pl.gradient -= mult * mean;
        pl.hessian -= mult * (a2 / a0 - mean * mean.transpose());
      }
    }
    end = begin;
  }
  return pl;
}

Eigen::VectorXd CoxFit::standard_errors() const { return covariance.diagonal().cwiseSqrt(); }

CoxFit fit_coxph(const Eigen::MatrixXd& x, std::span<const EventRecord> records, CoxOptions options) {
  check_design(x, records);
  const Eigen::Index n = x.rows(), q = x.cols();
  if (n <= q) {
    throw DegenerateInputError("cox: need more patients (" + std::to_string(n) + ") than covariates (" +
                               std::to_string(q) + ")");
  }
  for (Eigen::Index j = 0; j < q; ++j) {
    if (x.col(j).maxCoeff() == x.col(j).minCoeff()) {
      throw DegenerateInputError("cox: covariate column " + std::to_string(j) + " is constant");
    }
  }
  if (std::none_of(records.begin(), records.end(), [](const EventRecord& r) { return r.event == 1; })) {
    throw DegenerateInputError("cox: no events");
  }

  CoxFit fit;
  fit.ties = options.ties;
  fit.beta = Eigen::VectorXd::Zero(q);
  PartialLikelihood pl = cox_partial_likelihood(x, records, fit.beta, options.ties);
  {
    Eigen::MatrixXd info = -pl.hessian;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    if (lu.rank() < q || lu.rcond() < 1e-12) throw DegenerateInputError("cox: singular information matrix");
  }

  for (int it = 1; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    const Eigen::MatrixXd info = -pl.hessian;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw ConvergenceError("cox: information matrix lost positive definiteness at iteration " +
                             std::to_string(it));
    }
    Eigen::VectorXd step = ldlt.solve(pl.gradient);
    if (!step.allFinite()) throw ConvergenceError("cox: non-finite Newton step");

    const double grad_norm = pl.gradient.cwiseAbs().maxCoeff();
    const double step_norm = step.cwiseAbs().maxCoeff();
    if (grad_norm < options.gradient_tolerance && step_norm < 1e-6) {
      fit.gradient_history.push_back(grad_norm);
      break;
    }

    PartialLikelihood next = cox_partial_likelihood(x, records, fit.beta + step, options.ties);
    int halvings = 0;
    while (!(next.value >= pl.value - 1e-12 * std::abs(pl.value)) && halvings < 30) {
      step *= 0.5;
      next = cox_partial_likelihood(x, records, fit.beta + step, options.ties);
      ++halvings;
    }
    fit.beta += step;
    pl = std::move(next);
    fit.gradient_history.push_back(pl.gradient.cwiseAbs().maxCoeff());

    if (it == options.max_iterations) {
      throw ConvergenceError("cox: no convergence after " + std::to_string(it) +
                             " iterations (max |gradient| " + std::to_string(fit.gradient_history.back()) +
                             ")");
    }
  }

  fit.log_likelihood = pl.value;
  fit.information = -pl.hessian;
  fit.covariance = fit.information.inverse();
  // Vanishing curvature here means the estimate ran off to infinity (monotone
  // likelihood) and the gradient underflowed on the way.
  Eigen::FullPivLU<Eigen::MatrixXd> lu(fit.information);
  if (lu.rank() < fit.information.rows() || lu.rcond() < 1e-12 || !fit.covariance.allFinite()) {
    throw ConvergenceError("cox: estimate diverged (monotone likelihood); information vanished after " +
                           std::to_string(fit.iterations) + " iterations");
  }
  return fit;
}

double BaselineHazard::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return cumulative[static_cast<std::size_t>(it - times.begin()) - 1];
}

BaselineHazard breslow_baseline(const CoxFit& fit, const Eigen::MatrixXd& x,
                                std::span<const EventRecord> records) {
  check_design(x, records);
  const Eigen::VectorXd eta = x * fit.beta;
  const auto order = order_by_time(records);
  // Sweep backwards for risk-set totals, then accumulate forwards.
  std::vector<double> times, increments;
  double risk = 0.0;
  std::size_t end = order.size();
  while (end > 0) {
    const double t = records[order[end - 1]].time;
    std::size_t begin = end;
    double events = 0.0;
    while (begin > 0 && records[order[begin - 1]].time == t) {
      --begin;
      risk += std::exp(eta[static_cast<Eigen::Index>(order[begin])]);
      events += records[order[begin]].event;
    }
    if (events > 0.0) {
      times.push_back(t);
      increments.push_back(events / risk);
    }
    end = begin;
  }
  std::reverse(times.begin(), times.end());
  std::reverse(increments.begin(), increments.end());
  BaselineHazard h;
  h.times = std::move(times);
  double acc = 0.0;
  for (double inc : increments) h.cumulative.push_back(acc += inc);
  return h;
}

SurvCurve cox_survival(const BaselineHazard& baseline, const CoxFit& fit, const Eigen::VectorXd& x_row) {
  if (x_row.size() != fit.beta.size()) throw ShapeError("cox_survival: covariate length mismatch");
  const double rel = std::exp(x_row.dot(fit.beta));
  std::vector<double> values;
  values.reserve(baseline.times.size());
  double prev = 1.0;
  for (double h : baseline.cumulative) {
    prev = std::min(prev, std::clamp(std::exp(-h * rel), 0.0, 1.0));
    values.push_back(prev);
  }
  return {baseline.times, std::move(values), Interpolation::step};
}

}  // namespace mmsurv::stats
