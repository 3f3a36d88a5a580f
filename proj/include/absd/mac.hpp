// SPDX-License-Identifier: Apache-2.0
//
// Functional model of the IF4 and NVFP4 block multiply-accumulate datapaths.
//
//   decode (LUT for FP4, shift for INT4) -> 16 x binary16 products
//   scale_w * scale_a -> unified binary32 scale -> * alignment (1, 6/7, 36/49)
//   binary16 product * binary32 scale -> binary32, accumulated left to right
//
// Binary32 stages use native IEEE float arithmetic; the library is built
// with -ffp-contract=off so no stage is fused.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "absd/formats.hpp"

namespace absd {

inline constexpr std::size_t kMacWidth = 16;

/// IEEE-754 binary16 bit pattern.
struct Half {
  uint16_t bits = 0;
  bool operator==(const Half&) const = default;
};

/// Round-to-nearest-even conversion; overflow goes to infinity.
Half half_from_double(double x);
/// Exact widening.
double half_to_double(Half h);
inline float half_to_float(Half h) { return static_cast<float>(half_to_double(h)); }

/// Correctly rounded binary16 product.
Half half_mul(Half a, Half b);

/// Spacing of binary32 values around |x|.
double ulp32(double x);

struct MacTrace {
  /// Decoded operands in fixed point with one fractional bit (value * 2).
  std::array<int16_t, kMacWidth> decoded_w{};
  std::array<int16_t, kMacWidth> decoded_a{};
  bool w_int = false;
  bool a_int = false;
  std::array<Half, kMacWidth> products{};
  float unified_scale = 0.0f;
  float alignment = 1.0f;
  float aligned_scale = 0.0f;
  std::array<float, kMacWidth> scaled_products{};
  float acc_in = 0.0f;
  float accumulator = 0.0f;
};

struct MacResult {
  float acc = 0.0f;
  MacTrace trace;
};

using BlockCodes = std::span<const uint8_t, kMacWidth>;

/// Scale bytes are UE4M3; each sign bit selects INT4 decoding for its block.
MacResult mac_if4(BlockCodes w_codes, BlockCodes a_codes, uint8_t w_scale, uint8_t a_scale,
                  float acc);

/// Throws std::invalid_argument if either scale byte has its sign bit set.
MacResult mac_nvfp4(BlockCodes w_codes, BlockCodes a_codes, uint8_t w_scale,
                    uint8_t a_scale, float acc);

/// Float64 reference: exact dequantization under `spec` (alpha = 1) and a
/// double-precision dot product.
double oracle_dot(BlockCodes w_codes, BlockCodes a_codes, uint8_t w_scale, uint8_t a_scale,
                  const FormatSpec& spec);

/// One line per stage, hexadecimal bit patterns.
std::string dump_trace(const MacTrace& t);

}  // namespace absd
