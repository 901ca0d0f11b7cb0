#include "mmsurv/stats/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "mmsurv/errors.hpp"

namespace mmsurv::stats {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

ConfidenceInterval bootstrap_ci(std::size_t n, std::size_t resamples, std::uint64_t seed,
                                const std::function<double(std::span<const std::size_t>)>& statistic,
                                double level) {
  if (n == 0) throw UndefinedMetricError("bootstrap over an empty sample");
  if (resamples == 0) throw ConfigError("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("bootstrap level must lie in (0,1)");

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  ConfidenceInterval ci;
  ci.estimate = statistic(all);

  std::vector<double> values;
  values.reserve(resamples);
  std::vector<std::size_t> idx(n);
  for (std::size_t b = 0; b < resamples; ++b) {
    std::mt19937_64 rng(derive_seed(seed, b));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (auto& i : idx) i = pick(rng);
    try {
      values.push_back(statistic(idx));
    } catch (const UndefinedMetricError&) {
    }
  }
  if (values.empty()) throw UndefinedMetricError("bootstrap: statistic undefined on every resample");
  std::sort(values.begin(), values.end());
  const double alpha = 1.0 - level;
  ci.lower = quantile(values, 0.5 * alpha);
  ci.upper = quantile(values, 1.0 - 0.5 * alpha);
  ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  ci.margin = 0.5 * (ci.upper - ci.lower);
  ci.resamples_used = values.size();
  return ci;
}

}  // namespace mmsurv::stats
