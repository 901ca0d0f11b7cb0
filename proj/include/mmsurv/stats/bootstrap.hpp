#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace mmsurv::stats {

struct ConfidenceInterval {
  double estimate = 0.0;  // statistic on the full sample
  double lower = 0.0;
  double upper = 0.0;
  double mean = 0.0;      // mean over resamples
  double margin = 0.0;    // (upper - lower) / 2
  std::size_t resamples_used = 0;
};

// Deterministic per-resample seed derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// Nonparametric percentile bootstrap over indices 0..n-1. Resamples on which
// the statistic throws UndefinedMetricError are skipped.
ConfidenceInterval bootstrap_ci(std::size_t n, std::size_t resamples, std::uint64_t seed,
                                const std::function<double(std::span<const std::size_t>)>& statistic,
                                double level = 0.95);

}  // namespace mmsurv::stats
