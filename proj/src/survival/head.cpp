#include "mmsurv/survival/head.hpp"

#include <algorithm>
#include <cmath>

#include "mmsurv/autodiff/ops.hpp"
#include "mmsurv/errors.hpp"

namespace mmsurv::survival {

using ad::Graph;
using ad::Tensor;
using ad::Var;

TimeGrid::TimeGrid(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.empty()) throw ConfigError("time grid needs at least one edge");
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (!std::isfinite(edges_[i]) || edges_[i] <= 0.0) throw ConfigError("time grid edges must be positive");
    if (i && edges_[i] <= edges_[i - 1]) throw ConfigError("time grid edges must be strictly increasing");
  }
}

std::size_t TimeGrid::bin_index(double time) const {
  auto it = std::lower_bound(edges_.begin(), edges_.end(), time);
  if (it == edges_.end()) return edges_.size() - 1;
  return static_cast<std::size_t>(it - edges_.begin());
}

TimeGrid build_time_grid(std::span<const double> training_times, std::size_t bins) {
  if (bins == 0) throw ConfigError("time grid needs at least one bin");
  if (training_times.size() < bins) {
    throw InsufficientDataError("time grid needs at least " + std::to_string(bins) +
                                " training times, got " + std::to_string(training_times.size()));
  }
  std::vector<double> sorted(training_times.begin(), training_times.end());
  for (double t : sorted) {
    if (!std::isfinite(t) || t <= 0.0) throw InsufficientDataError("training times must be positive");
  }
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::vector<double> edges(bins);
  for (std::size_t k = 1; k <= bins; ++k) {
    // nearest rank: ceil(k/bins * n), computed in integers
    const std::size_t rank = (k * n + bins - 1) / bins;
    edges[k - 1] = sorted[rank - 1];
  }
  for (std::size_t k = 1; k < bins; ++k) {
    if (edges[k] <= edges[k - 1]) edges[k] = edges[k - 1] + kEdgeNudge;
  }
  return TimeGrid(std::move(edges));
}

SurvivalDistribution::SurvivalDistribution(std::vector<double> pmf, TimeGrid grid)
    : pmf_(std::move(pmf)), grid_(std::move(grid)) {
  if (pmf_.size() != grid_.bins()) {
    throw ShapeError("pmf has " + std::to_string(pmf_.size()) + " entries for " +
                     std::to_string(grid_.bins()) + " bins");
  }
  double total = 0.0;
  for (double p : pmf_) {
    if (!std::isfinite(p) || p < 0.0) throw NumericError("pmf entries must be finite and non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw NumericError("pmf does not sum to 1");
}

double SurvivalDistribution::cif(std::size_t bin) const {
  if (bin >= pmf_.size()) {
    throw std::out_of_range("bin " + std::to_string(bin) + " out of range for " +
                            std::to_string(pmf_.size()) + " bins");
  }
  double c = 0.0;
  for (std::size_t j = 0; j <= bin; ++j) c += pmf_[j];
  return std::min(c, 1.0);
}

double SurvivalDistribution::survival_at(double t) const {
  const auto& e = grid_.edges();
  if (t <= 0.0) return 1.0;
  double t0 = 0.0, s0 = 1.0;
  for (std::size_t m = 0; m < e.size(); ++m) {
    const double s1 = std::max(0.0, 1.0 - cif(m));
    if (t <= e[m]) return s0 + (t - t0) / (e[m] - t0) * (s1 - s0);
    t0 = e[m];
    s0 = s1;
  }
  return s0;
}

stats::SurvCurve SurvivalDistribution::curve() const {
  std::vector<double> times{0.0}, values{1.0};
  for (std::size_t m = 0; m < grid_.bins(); ++m) {
    times.push_back(grid_.edges()[m]);
    values.push_back(std::max(0.0, std::min(values.back(), 1.0 - cif(m))));
  }
  return {std::move(times), std::move(values), stats::Interpolation::linear};
}

SurvivalDistribution pmf_from_logits(std::span<const double> logits, const TimeGrid& grid) {
  Graph g;
  Var p = ad::softmax(g.constant(Tensor::row(logits)), 1);
  return SurvivalDistribution(p.value().vec(), grid);
}

double cif_at_bin(const SurvivalDistribution& dist, std::size_t bin) { return dist.cif(bin); }

std::vector<double> survival_monthly(const SurvivalDistribution& dist, std::size_t horizon) {
  std::vector<double> out(horizon + 1);
  for (std::size_t t = 0; t <= horizon; ++t) out[t] = dist.survival_at(static_cast<double>(t));
  return out;
}

namespace {

void check_batch(Var pmf, std::span<const EventRecord> records, const TimeGrid& grid) {
  if (records.empty()) throw ContractError("survival loss needs a non-empty batch");
  validate_records(records);
  if (pmf.rows() != records.size() || pmf.cols() != grid.bins()) {
    throw ShapeError("survival loss: pmf " + ad::shape_to_string(pmf.shape()) + " for " +
                     std::to_string(records.size()) + " records and " + std::to_string(grid.bins()) +
                     " bins");
  }
}

// pmf (B x bins) -> cumulative incidence via an upper-triangular ones matrix.
Var cumulative(Var pmf) {
  const std::size_t bins = pmf.cols();
  Tensor upper({bins, bins});
  for (std::size_t j = 0; j < bins; ++j)
    for (std::size_t m = j; m < bins; ++m) upper(j, m) = 1.0;
  return ad::matmul(pmf, pmf.graph().constant(std::move(upper)));
}

}  // namespace

Var likelihood_loss(Var pmf, std::span<const EventRecord> records, const TimeGrid& grid) {
  check_batch(pmf, records, grid);
  const std::size_t bins = grid.bins();
  std::vector<std::size_t> event_idx, censor_idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t flat = i * bins + grid.bin_index(records[i].time);
    (records[i].event ? event_idx : censor_idx).push_back(flat);
  }
  Graph& g = pmf.graph();
  Var total = g.constant(Tensor::scalar(0.0));
  if (!event_idx.empty()) {
    total = ad::add(total, ad::sum(ad::log(ad::gather(pmf, std::move(event_idx)), kLogFloor)));
  }
  if (!censor_idx.empty()) {
    Var cif = ad::gather(cumulative(pmf), std::move(censor_idx));
    Var surv = ad::add_scalar(ad::scale(cif, -1.0), 1.0);
    total = ad::add(total, ad::sum(ad::log(surv, kLogFloor)));
  }
  return ad::scale(total, -1.0 / static_cast<double>(records.size()));
}

Var ranking_loss(Var pmf, std::span<const EventRecord> records, const TimeGrid& grid, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("ranking kernel sigma must be positive");
  check_batch(pmf, records, grid);
  const std::size_t bins = grid.bins();
  std::vector<std::size_t> own, other;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].event) continue;
    const std::size_t m = grid.bin_index(records[i].time);
    for (std::size_t j = 0; j < records.size(); ++j) {
      if (records[i].time < records[j].time) {
        own.push_back(i * bins + m);
        other.push_back(j * bins + m);
      }
    }
  }
  Graph& g = pmf.graph();
  if (own.empty()) return g.constant(Tensor::scalar(0.0));
  const double pairs = static_cast<double>(own.size());
  Var cif = cumulative(pmf);
  Var diff = ad::sub(ad::gather(cif, std::move(own)), ad::gather(cif, std::move(other)));
  return ad::scale(ad::sum(ad::exp(ad::scale(diff, -1.0 / sigma))), 1.0 / pairs);
}

Var total_loss(Var logits, std::span<const EventRecord> records, const TimeGrid& grid,
               LossWeights weights) {
  if (weights.lambda < 0.0) throw ConfigError("ranking weight lambda must be non-negative");
  Var pmf = ad::softmax(logits, 1);
  Var nll = likelihood_loss(pmf, records, grid);
  if (weights.lambda == 0.0) return nll;
  return ad::add(nll, ad::scale(ranking_loss(pmf, records, grid, weights.sigma), weights.lambda));
}

namespace {

Tensor stack_pmfs(std::span<const SurvivalDistribution> dists) {
  if (dists.empty()) throw ContractError("survival loss needs a non-empty batch");
  const std::size_t bins = dists.front().grid().bins();
  Tensor t({dists.size(), bins});
  for (std::size_t i = 0; i < dists.size(); ++i) {
    if (dists[i].grid().edges() != dists.front().grid().edges()) {
      throw ContractError("survival loss: distributions use different time grids");
    }
    for (std::size_t m = 0; m < bins; ++m) t(i, m) = dists[i].pmf()[m];
  }
  return t;
}

}  // namespace

double likelihood_loss(std::span<const SurvivalDistribution> dists, std::span<const EventRecord> records) {
  Graph g;
  return likelihood_loss(g.constant(stack_pmfs(dists)), records, dists.front().grid()).value().item();
}

double ranking_loss(std::span<const SurvivalDistribution> dists, std::span<const EventRecord> records,
                    double sigma) {
  Graph g;
  return ranking_loss(g.constant(stack_pmfs(dists)), records, dists.front().grid(), sigma).value().item();
}

double total_loss(std::span<const SurvivalDistribution> dists, std::span<const EventRecord> records,
                  LossWeights weights) {
  if (weights.lambda < 0.0) throw ConfigError("ranking weight lambda must be non-negative");
  const double nll = likelihood_loss(dists, records);
  if (weights.lambda == 0.0) return nll;
  return nll + weights.lambda * ranking_loss(dists, records, weights.sigma);
}

}  // namespace mmsurv::survival
