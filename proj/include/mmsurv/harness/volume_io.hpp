#pragma once

#include <filesystem>
#include <iosfwd>

#include "mmsurv/volume/volume.hpp"

namespace mmsurv::harness {

// "MMGS", u16 version (1), u16 channels, u32 D, H, W, then float32 voxels,
// all little-endian, channel-major.
void write_volume(std::ostream& out, const volume::Volume& v);
volume::Volume read_volume(std::istream& in);

void save_volume(const std::filesystem::path& path, const volume::Volume& v);
volume::Volume load_volume(const std::filesystem::path& path);

}  // namespace mmsurv::harness
