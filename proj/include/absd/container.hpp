// SPDX-License-Identifier: Apache-2.0
//
// ABSD byte layout (all integers little-endian):
//
//   offset  size        field
//   0       4           magic "ABSD"
//   4       2           version (1)
//   6       2           format id (index into builtin_format_names())
//   8       2           rank
//   10      8 * rank    dims, u64 each
//   ..      4           alpha, IEEE-754 binary32
//   ..      num_blocks  scale bytes, row-major
//   ..      rest        element codes, bit-packed; element i of a row sits at
//                       bits [i*b, (i+1)*b) counting from the LSB of the
//                       row's first byte. Rows store whole padded blocks.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absd/quantizer.hpp"
#include "absd/tensor.hpp"

namespace absd {

inline constexpr uint16_t kContainerVersion = 1;

/// Throws CorruptData if `q` is not a well-formed container.
std::vector<uint8_t> write_absd(const QuantizedTensor& q);

/// Exact inverse of write_absd. Throws CorruptData on bad magic, unknown
/// version or format, truncated or oversized sections, NaN scale codes, an
/// indicator bit on a non-adaptive format, or non-zero padding codes.
QuantizedTensor read_absd(std::span<const uint8_t> bytes);

/// Little-endian IEEE binary32; throws std::invalid_argument when the byte
/// count does not match the shape.
Tensor read_raw_f32(std::span<const uint8_t> bytes, std::vector<std::size_t> shape);
std::vector<uint8_t> write_raw_f32(std::span<const float> values);

std::vector<uint8_t> read_file(const std::string& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace absd
