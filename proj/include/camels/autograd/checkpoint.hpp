#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "camels/autograd/backward.hpp"

// Parameter container, version 1. All integers and floats little-endian.
//
//   offset  size  field
//   0       8     magic "CMLSPRM\0"
//   8       4     u32 version (= 1)
//   12      8     u64 entry count
//   then per entry, in insertion order:
//           4     u32 name length in bytes
//           n     name (UTF-8, no terminator)
//           4     u32 rank
//           8*r   u64 extents
//           8*k   f64 values, row-major, k = product of extents

namespace camels {

inline constexpr char kCheckpointMagic[8] = {'C', 'M', 'L', 'S', 'P', 'R', 'M', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw std::runtime_error("checkpoint: unexpected end of file");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write_params(std::ostream& os, const NamedTensors& params) {
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  detail::put_le<std::uint64_t>(os, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    const Tensor& t = params.at(i);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
    for (std::size_t d : t.shape()) detail::put_le<std::uint64_t>(os, d);
    for (double v : t.values()) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
}

inline NamedTensors read_params(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = detail::get_le<std::uint64_t>(is);
  NamedTensors out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = detail::get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("checkpoint: truncated name");
    const auto rank = detail::get_le<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_le<std::uint64_t>(is);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
    out.insert(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

inline void save_params(const std::filesystem::path& path, const NamedTensors& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  write_params(os, params);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

inline NamedTensors load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_params(is);
}

}  // namespace camels
