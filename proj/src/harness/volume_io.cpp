#include "mmsurv/harness/volume_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mmsurv/errors.hpp"

namespace mmsurv::harness {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'M', 'G', 'S'};
constexpr std::uint16_t kVersion = 1;
// Guards against absurd headers before allocating.
constexpr std::uint64_t kMaxVoxels = 1ULL << 28;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw FormatError(std::string("volume file truncated in ") + what);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void write_volume(std::ostream& out, const volume::Volume& v) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint16_t>(out, kVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(v.channels()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(v.dims().depth));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(v.dims().height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(v.dims().width));
  out.write(reinterpret_cast<const char*>(v.data().data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!out) throw FormatError("failed writing volume");
}

volume::Volume read_volume(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("volume file has a bad magic");
  const auto version = get<std::uint16_t>(in, "header");
  if (version != kVersion) throw FormatError("unsupported volume version " + std::to_string(version));
  const auto channels = get<std::uint16_t>(in, "header");
  if (channels != volume::kChannels) {
    throw FormatError("volume has " + std::to_string(channels) + " channels, expected " +
                      std::to_string(volume::kChannels));
  }
  volume::Dims d;
  d.depth = get<std::uint32_t>(in, "header");
  d.height = get<std::uint32_t>(in, "header");
  d.width = get<std::uint32_t>(in, "header");
  const std::uint64_t voxels = static_cast<std::uint64_t>(d.depth) * d.height * d.width;
  if (voxels == 0 || voxels > kMaxVoxels) throw FormatError("volume has invalid dimensions");
  std::vector<float> data(channels * voxels);
  const auto bytes = static_cast<std::streamsize>(data.size() * sizeof(float));
  if (!in.read(reinterpret_cast<char*>(data.data()), bytes)) {
    throw FormatError("volume payload shorter than the declared dimensions");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("volume payload longer than the declared dimensions");
  return volume::Volume(d, std::move(data));
}

void save_volume(const std::filesystem::path& path, const volume::Volume& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write volume " + path.string());
  write_volume(out, v);
}

volume::Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open volume " + path.string());
  return read_volume(in);
}

}  // namespace mmsurv::harness
