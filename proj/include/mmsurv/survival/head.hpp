#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmsurv/autodiff/graph.hpp"
#include "mmsurv/records.hpp"
#include "mmsurv/stats/surv_curve.hpp"

// Discrete-time survival formulation: a softmax PMF over a small set of time
// bins whose upper edges come from percentiles of the training times.
namespace mmsurv::survival {

inline constexpr std::size_t kDefaultBins = 5;
// Tied percentile edges are pushed up by this many months.
inline constexpr double kEdgeNudge = 1e-6;
inline constexpr double kLogFloor = 1e-12;

// Strictly increasing positive bin upper edges; the origin is implicitly 0.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> edges);

  const std::vector<double>& edges() const noexcept { return edges_; }
  std::size_t bins() const noexcept { return edges_.size(); }
  double last_edge() const { return edges_.back(); }
  // First bin whose edge is >= time; times beyond the last edge map to the
  // last bin.
  std::size_t bin_index(double time) const;

 private:
  std::vector<double> edges_;
};

// Nearest-rank percentiles at 100*k/bins, k = 1..bins, of all training times
// (censored included). Throws InsufficientDataError for fewer than `bins`
// samples.
TimeGrid build_time_grid(std::span<const double> training_times, std::size_t bins = kDefaultBins);

class SurvivalDistribution {
 public:
  SurvivalDistribution(std::vector<double> pmf, TimeGrid grid);

  const std::vector<double>& pmf() const noexcept { return pmf_; }
  const TimeGrid& grid() const noexcept { return grid_; }

  // Sum of pmf[0..bin].
  double cif(std::size_t bin) const;
  // Linear interpolation through (0, 1) and (edge_m, 1 - cif(m)); constant
  // after the last edge.
  double survival_at(double t) const;
  stats::SurvCurve curve() const;

 private:
  std::vector<double> pmf_;
  TimeGrid grid_;
};

SurvivalDistribution pmf_from_logits(std::span<const double> logits, const TimeGrid& grid);
double cif_at_bin(const SurvivalDistribution& dist, std::size_t bin);
// S(t) at t = 0, 1, ..., horizon months.
std::vector<double> survival_monthly(const SurvivalDistribution& dist, std::size_t horizon);

struct LossWeights {
  double lambda = 0.5;  // ranking-term weight
  double sigma = 0.1;   // ranking kernel width
};

// Graph versions; `pmf` and `logits` are batch x bins.
ad::Var likelihood_loss(ad::Var pmf, std::span<const EventRecord> records, const TimeGrid& grid);
ad::Var ranking_loss(ad::Var pmf, std::span<const EventRecord> records, const TimeGrid& grid,
                     double sigma);
ad::Var total_loss(ad::Var logits, std::span<const EventRecord> records, const TimeGrid& grid,
                   LossWeights weights);

// Value versions over already-computed distributions.
double likelihood_loss(std::span<const SurvivalDistribution> dists, std::span<const EventRecord> records);
double ranking_loss(std::span<const SurvivalDistribution> dists, std::span<const EventRecord> records,
                    double sigma);
double total_loss(std::span<const SurvivalDistribution> dists, std::span<const EventRecord> records,
                  LossWeights weights);

}  // namespace mmsurv::survival
