// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian scalar packing shared by every binary format in the project.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace vil::bytes {

template <typename T>
concept WireScalar = std::is_arithmetic_v<T> && (sizeof(T) == 1 || sizeof(T) == 2 || sizeof(T) == 4 || sizeof(T) == 8);

template <WireScalar T>
auto to_bits(T v) {
  if constexpr (sizeof(T) == 1) return std::bit_cast<std::uint8_t>(v);
  else if constexpr (sizeof(T) == 2) return std::bit_cast<std::uint16_t>(v);
  else if constexpr (sizeof(T) == 4) return std::bit_cast<std::uint32_t>(v);
  else return std::bit_cast<std::uint64_t>(v);
}

template <WireScalar T>
void store_le(std::uint8_t* out, T v) {
  auto bits = to_bits(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

template <WireScalar T>
T load_le(const std::uint8_t* in) {
  using Bits = decltype(to_bits(T{}));
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<Bits>(static_cast<Bits>(in[i]) << (8 * i));
  return std::bit_cast<T>(bits);
}

/// Append-only little-endian writer.
class Writer {
 public:
  template <WireScalar T>
  Writer& put(T v) {
    std::uint8_t tmp[sizeof(T)];
    store_le(tmp, v);
    buf_.insert(buf_.end(), tmp, tmp + sizeof(T));
    return *this;
  }
  Writer& put_bytes(std::span<const std::uint8_t> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }
  Writer& put_tag(const char (&tag)[5]) {
    buf_.insert(buf_.end(), tag, tag + 4);
    return *this;
  }
  std::vector<std::uint8_t>& data() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader. Every accessor returns false instead of reading past the end.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf_(b) {}

  template <WireScalar T>
  bool get(T& out) {
    if (remaining() < sizeof(T)) return false;
    out = load_le<T>(buf_.data() + pos_);
    pos_ += sizeof(T);
    return true;
  }
  bool get_bytes(std::size_t n, std::span<const std::uint8_t>& out) {
    if (remaining() < n) return false;
    out = buf_.subspan(pos_, n);
    pos_ += n;
    return true;
  }
  bool expect_tag(const char (&tag)[5]) {
    if (remaining() < 4 || std::memcmp(buf_.data() + pos_, tag, 4) != 0) return false;
    pos_ += 4;
    return true;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::string hex_dump(std::span<const std::uint8_t> b, std::size_t max_bytes = 64);

}  // namespace vil::bytes
