#pragma once

#include <array>
#include <random>

#include "mmsurv/volume/volume.hpp"

namespace mmsurv::volume {

// A brain-like ellipsoid carrying one spherical lesion: an edema halo bright
// on T2/FLAIR, a necrotic core dark on T1, and an enhancing rim on
// T1 post-contrast whose brightness is `rim_intensity`.
struct Phantom {
  double lesion_radius = 3.0;             // voxels
  double rim_intensity = 1.0;             // relative to normal tissue
  std::array<double, 3> center{8, 8, 8};  // z, y, x
};

// Draws a lesion centre that keeps the lesion inside the ellipsoid.
Phantom random_phantom(Dims dims, double radius, double rim_intensity, std::mt19937_64& rng);

// Tissue intensities with Gaussian noise (sd `noise`); background is zero.
Volume render_phantom(Dims dims, const Phantom& p, std::mt19937_64& rng, double noise = 0.05);

}  // namespace mmsurv::volume
