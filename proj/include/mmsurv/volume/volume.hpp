#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mmsurv/autodiff/tensor.hpp"

namespace mmsurv::volume {

// Four co-registered channels stacked: T2, FLAIR, T1, T1 post-contrast.
inline constexpr std::size_t kChannels = 4;

struct Dims {
  std::size_t depth = 16, height = 16, width = 16;
  std::size_t voxels() const { return depth * height * width; }
  bool operator==(const Dims&) const = default;
};

// Channel-major float voxels: index ((c * D + z) * H + y) * W + x.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Dims dims, float fill = 0.0f);
  Volume(Dims dims, std::vector<float> data);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t channels() const noexcept { return kChannels; }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<float> channel(std::size_t c);
  std::span<const float> channel(std::size_t c) const;

  float& at(std::size_t c, std::size_t z, std::size_t y, std::size_t x);
  float at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) const;

  bool operator==(const Volume&) const = default;

 private:
  Dims dims_;
  std::vector<float> data_;
};

// Histogram-standardization reference: the nine deciles (10%, ..., 90%) per
// channel. Intensities beyond the outer deciles follow the end segments.
inline constexpr std::size_t kLandmarks = 9;
using ChannelLandmarks = std::array<double, kLandmarks>;
using Landmarks = std::array<ChannelLandmarks, kChannels>;

// Linear-interpolation quantiles of the nonzero voxels of one channel.
// Throws DegenerateInputError with fewer than two distinct nonzero values.
ChannelLandmarks channel_landmarks(std::span<const float> voxels);
// Landmarks of the pooled nonzero voxels of every training volume.
Landmarks fit_landmarks(std::span<const Volume> training);

// Per channel: piecewise-linear map of the volume's own landmarks onto the
// reference (extrapolating the end segments), then z-normalization over the
// nonzero mask. Background voxels stay zero.
Volume preprocess_volume(const Volume& v, const Landmarks& reference);

// (tokens x kChannels*p^3) raw patches. Tokens are ordered z, y, x over the
// patch grid; each row is channel-major, then z, y, x within the patch.
ad::Tensor patchify(const Volume& v, std::size_t patch);
Volume unpatchify(const ad::Tensor& patches, Dims dims, std::size_t patch);
std::size_t token_count(Dims dims, std::size_t patch);

struct Box {
  std::array<std::size_t, 3> origin{};  // z, y, x
  std::array<std::size_t, 3> extent{};
  std::size_t voxels() const { return extent[0] * extent[1] * extent[2]; }
  bool contains(std::size_t z, std::size_t y, std::size_t x) const;
};

struct CutoutResult {
  Volume volume;
  Box box;
};

// Zeroes one random box whose extent is round(fraction * dim) per axis (at
// least one voxel). fraction must lie in (0, 0.5].
CutoutResult augment_cutout(const Volume& v, std::mt19937_64& rng, double fraction = 0.25);

// Exchanges two patch-grid blocks of size p in all channels.
void swap_blocks(Volume& v, std::size_t patch, std::size_t block_a, std::size_t block_b);

struct PatchSwapResult {
  Volume volume;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // patch-grid indices
};

// n_swaps exchanges between disjoint pairs of distinct patch-grid blocks.
PatchSwapResult augment_patch_swap(const Volume& v, std::mt19937_64& rng, std::size_t n_swaps = 8,
                                   std::size_t patch = 4);

}  // namespace mmsurv::volume
