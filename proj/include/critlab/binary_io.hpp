// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian scalar and tensor serialization for checkpoints and
// feature files.

#pragma once

#include <Eigen/Core>

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace critlab::io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated binary file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void write_i32(std::ostream& os, std::int32_t v) { write_u32(os, static_cast<std::uint32_t>(v)); }
inline std::int32_t read_i32(std::istream& is) { return static_cast<std::int32_t>(read_u32(is)); }

inline void write_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  write_u32(os, static_cast<std::uint32_t>(bits));
  write_u32(os, static_cast<std::uint32_t>(bits >> 32));
}

inline double read_f64(std::istream& is) {
  const std::uint64_t lo = read_u32(is);
  const std::uint64_t hi = read_u32(is);
  return std::bit_cast<double>(lo | (hi << 32));
}

/// Four-character tag stored as a little-endian int32.
inline std::int32_t magic(const char (&tag)[5]) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(tag[i])) << (8 * i);
  return static_cast<std::int32_t>(v);
}

inline void expect_magic(std::istream& is, const char (&tag)[5]) {
  if (read_i32(is) != magic(tag)) throw std::runtime_error(std::string("not a ") + tag + " file");
}

/// Writes every coefficient of an Eigen object in storage order.
template <typename Tensor>
void write_tensor(std::ostream& os, const Tensor& t) {
  for (Eigen::Index i = 0; i < t.size(); ++i) write_f64(os, t.data()[i]);
}

template <typename Tensor>
void read_tensor(std::istream& is, Tensor& t) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = read_f64(is);
}

}  // namespace critlab::io
