#include "mmsurv/volume/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mmsurv/errors.hpp"

namespace mmsurv::volume {

Volume::Volume(Dims dims, float fill) : dims_(dims), data_(kChannels * dims.voxels(), fill) {
  if (dims.voxels() == 0) throw ShapeError("volume dimensions must be positive");
}

Volume::Volume(Dims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
  if (dims.voxels() == 0) throw ShapeError("volume dimensions must be positive");
  if (data_.size() != kChannels * dims.voxels()) {
    throw ShapeError("volume data has " + std::to_string(data_.size()) + " values, expected " +
                     std::to_string(kChannels * dims.voxels()));
  }
}

std::span<float> Volume::channel(std::size_t c) {
  if (c >= kChannels) throw std::out_of_range("channel index out of range");
  return std::span<float>(data_).subspan(c * dims_.voxels(), dims_.voxels());
}

std::span<const float> Volume::channel(std::size_t c) const {
  if (c >= kChannels) throw std::out_of_range("channel index out of range");
  return std::span<const float>(data_).subspan(c * dims_.voxels(), dims_.voxels());
}

float& Volume::at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) {
  return data_[((c * dims_.depth + z) * dims_.height + y) * dims_.width + x];
}

float Volume::at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) const {
  return data_[((c * dims_.depth + z) * dims_.height + y) * dims_.width + x];
}

namespace {

ChannelLandmarks quantiles(std::vector<double> values) {
  if (values.size() < 2) throw DegenerateInputError("histogram landmarks need at least two nonzero voxels");
  std::sort(values.begin(), values.end());
  if (values.front() == values.back()) throw DegenerateInputError("channel has zero intensity variance");
  ChannelLandmarks lm{};
  const double last = static_cast<double>(values.size() - 1);
  for (std::size_t k = 0; k < kLandmarks; ++k) {
    const double pos = last * static_cast<double>(k + 1) / static_cast<double>(kLandmarks + 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    lm[k] = values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  }
  return lm;
}

void append_nonzero(std::span<const float> voxels, std::vector<double>& out) {
  for (float v : voxels) {
    if (!std::isfinite(v)) throw NumericError("volume contains a non-finite voxel");
    if (v != 0.0f) out.push_back(v);
  }
}

// Piecewise-linear map sending `from` landmarks onto `to`; equal source
// landmarks are collapsed.
double map_intensity(double v, const ChannelLandmarks& from, const ChannelLandmarks& to) {
  std::vector<std::pair<double, double>> knots;
  for (std::size_t k = 0; k < kLandmarks; ++k) {
    if (knots.empty() || from[k] > knots.back().first) knots.emplace_back(from[k], to[k]);
  }
  std::size_t seg = 0;
  while (seg + 2 < knots.size() && v > knots[seg + 1].first) ++seg;
  const auto [x0, y0] = knots[seg];
  const auto [x1, y1] = knots[seg + 1];
  return y0 + (v - x0) * (y1 - y0) / (x1 - x0);
}

}  // namespace

ChannelLandmarks channel_landmarks(std::span<const float> voxels) {
  std::vector<double> nz;
  append_nonzero(voxels, nz);
  return quantiles(std::move(nz));
}

Landmarks fit_landmarks(std::span<const Volume> training) {
  if (training.empty()) throw InsufficientDataError("landmark fitting needs at least one volume");
  Landmarks out{};
  for (std::size_t c = 0; c < kChannels; ++c) {
    std::vector<double> pooled;
    for (const auto& v : training) append_nonzero(v.channel(c), pooled);
    out[c] = quantiles(std::move(pooled));
  }
  return out;
}

Volume preprocess_volume(const Volume& v, const Landmarks& reference) {
  Volume out(v.dims());
  for (std::size_t c = 0; c < kChannels; ++c) {
    const auto src = v.channel(c);
    const ChannelLandmarks own = channel_landmarks(src);
    std::vector<double> mapped(src.size(), 0.0);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i] == 0.0f) continue;
      mapped[i] = map_intensity(src[i], own, reference[c]);
      sum += mapped[i];
      ++count;
    }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i)
      if (src[i] != 0.0f) ss += (mapped[i] - mean) * (mapped[i] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 0.0)) throw DegenerateInputError("channel " + std::to_string(c) + " has zero variance");
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i] != 0.0f) dst[i] = static_cast<float>((mapped[i] - mean) / sd);
    }
  }
  return out;
}

namespace {

void check_patch(Dims d, std::size_t p) {
  if (p == 0 || d.depth % p || d.height % p || d.width % p) {
    throw ShapeError("volume " + std::to_string(d.depth) + "x" + std::to_string(d.height) + "x" +
                     std::to_string(d.width) + " is not divisible by patch size " + std::to_string(p));
  }
}

}  // namespace

std::size_t token_count(Dims d, std::size_t p) {
  check_patch(d, p);
  return (d.depth / p) * (d.height / p) * (d.width / p);
}

ad::Tensor patchify(const Volume& v, std::size_t p) {
  const Dims d = v.dims();
  const std::size_t tokens = token_count(d, p);
  const std::size_t gy = d.height / p, gx = d.width / p, p3 = p * p * p;
  ad::Tensor out({tokens, kChannels * p3});
  for (std::size_t t = 0; t < tokens; ++t) {
    const std::size_t bz = t / (gy * gx), by = (t / gx) % gy, bx = t % gx;
    std::size_t col = 0;
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t z = 0; z < p; ++z)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) out(t, col++) = v.at(c, bz * p + z, by * p + y, bx * p + x);
  }
  return out;
}

Volume unpatchify(const ad::Tensor& patches, Dims d, std::size_t p) {
  const std::size_t tokens = token_count(d, p);
  const std::size_t gy = d.height / p, gx = d.width / p, p3 = p * p * p;
  if (patches.rows() != tokens || patches.cols() != kChannels * p3) {
    throw ShapeError("unpatchify: patch matrix " + ad::shape_to_string(patches.shape()) +
                     " does not match the volume geometry");
  }
  Volume v(d);
  for (std::size_t t = 0; t < tokens; ++t) {
    const std::size_t bz = t / (gy * gx), by = (t / gx) % gy, bx = t % gx;
    std::size_t col = 0;
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t z = 0; z < p; ++z)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            v.at(c, bz * p + z, by * p + y, bx * p + x) = static_cast<float>(patches(t, col++));
  }
  return v;
}

bool Box::contains(std::size_t z, std::size_t y, std::size_t x) const {
  return z >= origin[0] && z < origin[0] + extent[0] && y >= origin[1] && y < origin[1] + extent[1] &&
         x >= origin[2] && x < origin[2] + extent[2];
}

CutoutResult augment_cutout(const Volume& v, std::mt19937_64& rng, double fraction) {
  if (!(fraction > 0.0 && fraction <= 0.5)) throw ConfigError("cutout fraction must lie in (0, 0.5]");
  const Dims d = v.dims();
  const std::array<std::size_t, 3> dim{d.depth, d.height, d.width};
  CutoutResult res{v, {}};
  for (std::size_t a = 0; a < 3; ++a) {
    const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * dim[a])));
    std::uniform_int_distribution<std::size_t> start(0, dim[a] - len);
    res.box.origin[a] = start(rng);
    res.box.extent[a] = len;
  }
  const Box& b = res.box;
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t z = b.origin[0]; z < b.origin[0] + b.extent[0]; ++z)
      for (std::size_t y = b.origin[1]; y < b.origin[1] + b.extent[1]; ++y)
        for (std::size_t x = b.origin[2]; x < b.origin[2] + b.extent[2]; ++x) res.volume.at(c, z, y, x) = 0.0f;
  return res;
}

void swap_blocks(Volume& v, std::size_t p, std::size_t a, std::size_t b) {
  const Dims d = v.dims();
  const std::size_t tokens = token_count(d, p);
  if (a >= tokens || b >= tokens) throw std::out_of_range("swap_blocks: block index out of range");
  const std::size_t gy = d.height / p, gx = d.width / p;
  auto origin = [&](std::size_t t) {
    return std::array<std::size_t, 3>{t / (gy * gx) * p, (t / gx) % gy * p, t % gx * p};
  };
  const auto oa = origin(a), ob = origin(b);
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t z = 0; z < p; ++z)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          std::swap(v.at(c, oa[0] + z, oa[1] + y, oa[2] + x), v.at(c, ob[0] + z, ob[1] + y, ob[2] + x));
}

PatchSwapResult augment_patch_swap(const Volume& v, std::mt19937_64& rng, std::size_t n_swaps,
                                   std::size_t patch) {
  if (n_swaps == 0) throw ConfigError("patch swap needs at least one swap");
  const std::size_t tokens = token_count(v.dims(), patch);
  if (2 * n_swaps > tokens) {
    throw ConfigError("patch swap: " + std::to_string(n_swaps) + " disjoint swaps need " +
                      std::to_string(2 * n_swaps) + " blocks, volume has " + std::to_string(tokens));
  }
  std::vector<std::size_t> blocks(tokens);
  std::iota(blocks.begin(), blocks.end(), 0);
  // partial Fisher-Yates: the first 2 * n_swaps entries are a random draw
  for (std::size_t i = 0; i < 2 * n_swaps; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, tokens - 1);
    std::swap(blocks[i], blocks[pick(rng)]);
  }
  PatchSwapResult res{v, {}};
  for (std::size_t s = 0; s < n_swaps; ++s) {
    res.pairs.emplace_back(blocks[2 * s], blocks[2 * s + 1]);
    swap_blocks(res.volume, patch, blocks[2 * s], blocks[2 * s + 1]);
  }
  return res;
}

}  // namespace mmsurv::volume
