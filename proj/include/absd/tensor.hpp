// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace absd {

/// Raised when a quantized container or byte stream violates its layout.
class CorruptData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major float32 tensor. Quantization runs along the last axis.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {}

  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : data.size() / cols(); }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(data).subspan(r * cols(), cols());
  }

  bool operator==(const Tensor&) const = default;
};

/// Product of dims; throws std::invalid_argument on rank 0 or a zero dim.
std::size_t checked_numel(std::span<const std::size_t> shape);

/// Throws std::invalid_argument unless shape and data agree.
void validate(const Tensor& t);

/// Parses "2,16" style shapes.
std::vector<std::size_t> parse_shape(const std::string& text);

/// Splits [0, n) into contiguous chunks run on up to `threads` threads.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Reads `bits` (<= 8) at element `index` of a little-endian bit stream.
inline uint8_t get_packed(std::span<const uint8_t> bytes, std::size_t index, int bits) {
  const std::size_t bit = index * static_cast<std::size_t>(bits);
  const std::size_t byte = bit / 8;
  unsigned window = bytes[byte];
  if (byte + 1 < bytes.size()) window |= static_cast<unsigned>(bytes[byte + 1]) << 8;
  return static_cast<uint8_t>((window >> (bit % 8)) & ((1u << bits) - 1));
}

inline void set_packed(std::span<uint8_t> bytes, std::size_t index, int bits, uint8_t code) {
  const std::size_t bit = index * static_cast<std::size_t>(bits);
  const std::size_t byte = bit / 8;
  const unsigned shift = bit % 8;
  const unsigned mask = ((1u << bits) - 1) << shift;
  const unsigned value = (static_cast<unsigned>(code) << shift) & mask;
  bytes[byte] = static_cast<uint8_t>((bytes[byte] & ~mask) | value);
  if (shift + bits > 8) {
    bytes[byte + 1] = static_cast<uint8_t>((bytes[byte + 1] & ~(mask >> 8)) | (value >> 8));
  }
}

}  // namespace absd
