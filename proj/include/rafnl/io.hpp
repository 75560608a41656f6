#pragma once

// TCU1 cube files and plain-text helpers.
//
// Layout (all little-endian):
//   0  "TCU1"
//   4  u16 version = 1
//   6  u32 rows, u32 cols, u32 bands
//   18 rows*cols*bands f64, band-sequential, row-major inside a band

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "rafnl/cube.hpp"
#include "rafnl/error.hpp"

namespace rafnl {

inline constexpr std::uint16_t kTcuVersion = 1;
inline constexpr std::size_t kTcuHeaderBytes = 18;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

template <class T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v = static_cast<T>(v | (static_cast<T>(p[i]) << (8 * i)));
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> encode_cube(const Cube& x) {
  const auto lim = static_cast<Index>(std::numeric_limits<std::uint32_t>::max());
  if (x.empty()) throw DimensionError("encode_cube: empty cube");
  if (x.rows() > lim || x.cols() > lim || x.bands() > lim) throw DimensionError("encode_cube: dimension exceeds u32");
  std::vector<unsigned char> out;
  out.reserve(kTcuHeaderBytes + 8 * static_cast<std::size_t>(x.size()));
  for (char c : {'T', 'C', 'U', '1'}) out.push_back(static_cast<unsigned char>(c));
  detail::put_le<std::uint16_t>(out, kTcuVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x.rows()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x.cols()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x.bands()));
  for (Index i = 0; i < x.size(); ++i) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x.data()[i]));
  return out;
}

inline Cube decode_cube(const std::vector<unsigned char>& bytes, const std::string& what = "cube") {
  if (bytes.size() < kTcuHeaderBytes)
    throw IoError(what + ": truncated header, expected " + std::to_string(kTcuHeaderBytes) + " bytes, got " +
                  std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), "TCU1", 4) != 0) throw IoError(what + ": bad magic, not a TCU1 file");
  const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
  if (version != kTcuVersion) throw IoError(what + ": unsupported version " + std::to_string(version));
  const std::uint64_t r = detail::get_le<std::uint32_t>(bytes.data() + 6);
  const std::uint64_t c = detail::get_le<std::uint32_t>(bytes.data() + 10);
  const std::uint64_t b = detail::get_le<std::uint32_t>(bytes.data() + 14);
  if (r == 0 || c == 0 || b == 0) throw IoError(what + ": zero dimension in header");
  // r*c fits in 64 bits; guard the product with bands and the byte count
  const std::uint64_t rc = r * c;
  if (rc > std::numeric_limits<std::uint64_t>::max() / b || rc * b > (std::numeric_limits<std::uint64_t>::max() - kTcuHeaderBytes) / 8)
    throw IoError(what + ": dimensions overflow");
  const std::uint64_t n = rc * b;
  const std::uint64_t expected = kTcuHeaderBytes + 8 * n;
  if (bytes.size() != expected)
    throw IoError(what + ": size mismatch, expected " + std::to_string(expected) + " bytes for " + std::to_string(r) +
                  "x" + std::to_string(c) + "x" + std::to_string(b) + ", got " + std::to_string(bytes.size()));
  std::vector<double> data(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.data() + kTcuHeaderBytes + 8 * i));
  return Cube(static_cast<Index>(r), static_cast<Index>(c), static_cast<Index>(b), std::move(data));
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline Cube read_cube(const std::string& path) { return decode_cube(read_bytes(path), path); }

inline void write_cube(const std::string& path, const Cube& x) { write_bytes(path, encode_cube(x)); }

inline std::string read_text(const std::string& path) {
  const auto b = read_bytes(path);
  return std::string(b.begin(), b.end());
}

inline void write_text(const std::string& path, const std::string& text) {
  write_bytes(path, std::vector<unsigned char>(text.begin(), text.end()));
}

}  // namespace rafnl
