#include "mmsurv/volume/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace mmsurv::volume {

namespace {

// T2, FLAIR, T1, T1 post-contrast
constexpr std::array<double, kChannels> kWhite{0.50, 0.40, 0.70, 0.62};
constexpr std::array<double, kChannels> kGrey{0.66, 0.52, 0.50, 0.44};
constexpr double kCortex = 0.55;  // squared ellipsoid radius where grey matter starts
constexpr std::array<double, kChannels> kEdema{0.95, 1.00, 0.45, 0.50};
constexpr std::array<double, kChannels> kCore{1.10, 0.70, 0.25, 0.30};
constexpr double kHalo = 1.3;  // edema radius over lesion radius
constexpr double kRimWidth = 0.35;  // fraction of the lesion radius

std::array<double, 3> semi_axes(Dims d) {
  return {0.45 * static_cast<double>(d.depth), 0.46 * static_cast<double>(d.height),
          0.42 * static_cast<double>(d.width)};
}

}  // namespace

Phantom random_phantom(Dims dims, double radius, double rim_intensity, std::mt19937_64& rng) {
  Phantom p;
  p.lesion_radius = radius;
  p.rim_intensity = rim_intensity;
  const auto axes = semi_axes(dims);
  const std::array<double, 3> mid{0.5 * static_cast<double>(dims.depth), 0.5 * static_cast<double>(dims.height),
                                  0.5 * static_cast<double>(dims.width)};
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t a = 0; a < 3; ++a) {
    const double room = std::max(0.0, 0.5 * (axes[a] - radius));
    p.center[a] = mid[a] + room * u(rng);
  }
  return p;
}

Volume render_phantom(Dims dims, const Phantom& p, std::mt19937_64& rng, double noise) {
  Volume v(dims);
  const auto axes = semi_axes(dims);
  const double cz = 0.5 * static_cast<double>(dims.depth), cy = 0.5 * static_cast<double>(dims.height),
               cx = 0.5 * static_cast<double>(dims.width);
  std::normal_distribution<double> jitter(0.0, noise);
  const double r = p.lesion_radius;
  for (std::size_t z = 0; z < dims.depth; ++z)
    for (std::size_t y = 0; y < dims.height; ++y)
      for (std::size_t x = 0; x < dims.width; ++x) {
        const double fz = z + 0.5, fy = y + 0.5, fx = x + 0.5;
        const double e = std::pow((fz - cz) / axes[0], 2) + std::pow((fy - cy) / axes[1], 2) +
                         std::pow((fx - cx) / axes[2], 2);
        if (e > 1.0) continue;
        const double dist = std::sqrt(std::pow(fz - p.center[0], 2) + std::pow(fy - p.center[1], 2) +
                                      std::pow(fx - p.center[2], 2));
        for (std::size_t c = 0; c < kChannels; ++c) {
          double val = e > kCortex ? kGrey[c] : kWhite[c];
          if (dist <= r * (1.0 - kRimWidth)) {
            val = kCore[c];
          } else if (dist <= r) {
            val = c == 3 ? 0.5 + 0.6 * p.rim_intensity : kEdema[c];
          } else if (dist <= kHalo * r) {
            val = kEdema[c];
          }
          // keep tissue strictly positive so the nonzero mask is the brain
          v.at(c, z, y, x) = static_cast<float>(std::max(1e-3, val + jitter(rng)));
        }
      }
  return v;
}

}  // namespace mmsurv::volume
