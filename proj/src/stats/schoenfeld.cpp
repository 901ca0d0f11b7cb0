#include "mmsurv/stats/schoenfeld.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmsurv/errors.hpp"
#include "mmsurv/stats/kaplan_meier.hpp"

namespace mmsurv::stats {

SchoenfeldResiduals schoenfeld_residuals(const CoxFit& fit, const Eigen::MatrixXd& x,
                                         std::span<const EventRecord> records) {
  if (static_cast<std::size_t>(x.rows()) != records.size() || x.cols() != fit.beta.size()) {
    throw ShapeError("schoenfeld: covariates do not match the fit and records");
  }
  validate_records(records);
  const Eigen::Index q = x.cols();
  const Eigen::VectorXd eta = x * fit.beta;
  const double shift = eta.size() ? eta.maxCoeff() : 0.0;

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

  // Risk-set weighted means at each distinct time, from a backward sweep.
  std::vector<std::pair<double, std::size_t>> events;  // (time, patient)
  std::vector<Eigen::VectorXd> means;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(q);
  std::size_t end = order.size();
  while (end > 0) {
    const double t = records[order[end - 1]].time;
    std::size_t begin = end;
    while (begin > 0 && records[order[begin - 1]].time == t) {
      --begin;
      const auto i = static_cast<Eigen::Index>(order[begin]);
      const double w = std::exp(eta[i] - shift);
      s0 += w;
      s1 += w * x.row(i).transpose();
    }
    for (std::size_t k = begin; k < end; ++k) {
      if (records[order[k]].event) {
        events.emplace_back(t, order[k]);
        means.push_back(s1 / s0);
      }
    }
    end = begin;
  }

  SchoenfeldResiduals out;
  out.residuals.resize(static_cast<Eigen::Index>(events.size()), q);
  // events were collected latest-first; emit in ascending time
  const std::size_t m = events.size();
  for (std::size_t k = 0; k < m; ++k) {
    const auto& [t, i] = events[m - 1 - k];
    out.event_times.push_back(t);
    out.residuals.row(static_cast<Eigen::Index>(k)) =
        x.row(static_cast<Eigen::Index>(i)) - means[m - 1 - k].transpose();
  }
  return out;
}

TestResult zph_score_test(std::span<const double> time_transform, std::span<const double> scaled_residual,
                          double variance_jj, std::size_t events) {
  if (time_transform.size() != scaled_residual.size()) throw ShapeError("zph: length mismatch");
  if (time_transform.empty() || events == 0) throw InsufficientDataError("zph: no events");
  const double gbar = std::accumulate(time_transform.begin(), time_transform.end(), 0.0) /
                      static_cast<double>(time_transform.size());
  double cross = 0.0, spread = 0.0;
  for (std::size_t k = 0; k < time_transform.size(); ++k) {
    const double c = time_transform[k] - gbar;
    cross += c * scaled_residual[k];
    spread += c * c;
  }
  if (spread <= 0.0) throw UndefinedMetricError("zph: time transform is constant");
  if (!(variance_jj > 0.0)) throw NumericError("zph: non-positive variance");
  TestResult r;
  r.statistic = cross * cross / (variance_jj * static_cast<double>(events) * spread);
  r.df = 1;
  r.p_value = chi_square_sf_1df(r.statistic);
  return r;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
    i = j;
  }
  return ranks;
}

}  // namespace

std::vector<TestResult> schoenfeld_test(const CoxFit& fit, std::span<const EventRecord> records,
                                        const Eigen::MatrixXd& x, TimeTransform transform) {
  const SchoenfeldResiduals res = schoenfeld_residuals(fit, x, records);
  const std::size_t events = res.event_times.size();
  if (events < 5) throw InsufficientDataError("schoenfeld test needs at least 5 events");

  std::vector<double> g;
  if (transform == TimeTransform::rank) {
    g = average_ranks(res.event_times);
  } else {
    const SurvCurve km = kaplan_meier(records);
    for (double t : res.event_times) g.push_back(1.0 - km.left_limit(t));
  }

  const Eigen::MatrixXd scaled = static_cast<double>(events) * res.residuals * fit.covariance;
  std::vector<TestResult> out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::vector<double> col(events);
    for (std::size_t k = 0; k < events; ++k) col[k] = scaled(static_cast<Eigen::Index>(k), j);
    out.push_back(zph_score_test(g, col, fit.covariance(j, j), events));
  }
  return out;
}

}  // namespace mmsurv::stats
