// SPDX-License-Identifier: Apache-2.0
//
// Tensor/block scale computation, per-block quantization for every builtin
// format, and dequantization.
//
// Scales follow the usual two-level scheme: a float32 tensor scale
//   alpha = max|X| / (elem_max * scale_max)
// and one stored block scale per block
//   delta_i = max|X_block| / (alpha * elem_max).
// Adaptive (IF) formats evaluate a float candidate and an integer candidate
// pre-scaled by 1/align_descale, keep the one with the smaller squared error
// (float on ties) and flag integer blocks in the scale byte's sign bit.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "absd/formats.hpp"
#include "absd/tensor.hpp"

namespace absd {

class SplitMix64;

enum class ScaleVariant {
  kStandard,  // alpha = max|X| / (elem_max * scale_max)
  kFourSix    // alpha = max|X| / (elem_max * 256)
};

/// Tensor scale as float32. MX formats and all-zero inputs give 1.
float tensor_scale(std::span<const float> values, const FormatSpec& spec,
                   ScaleVariant variant);

/// Uses the variant implied by the format (kFourSix for the -46 formats).
float tensor_scale(std::span<const float> values, const FormatSpec& spec);

struct BlockQuantResult {
  std::vector<uint8_t> codes;  // block_size raw element codes
  uint8_t scale_byte = 0;
  double scale = 0.0;          // decoded block scale magnitude
  /// Integer candidate won (IF formats) or the max-4 candidate won (4/6).
  bool chose_int = false;
  double sq_error = 0.0;       // sum over the block
  /// {float or max-6 candidate, integer or max-4 candidate}; the second is
  /// +inf for formats without a selection rule.
  std::array<double, 2> candidate_errors{};

  double mean_error() const { return sq_error / static_cast<double>(codes.size()); }
};

/// Quantizes one zero-padded block of exactly spec.block_size values.
///
/// `scale_unbias` in (0, 1] maps the block maximum to elem_max * scale_unbias
/// (16/17 leaves room for block-scale rounding so stochastic rounding never
/// clips). `rng` is required when `mode` is stochastic.
BlockQuantResult quantize_block(std::span<const float> vals, float alpha,
                                const FormatSpec& spec,
                                Rounding mode = Rounding::kNearestEven,
                                double scale_unbias = 1.0,
                                SplitMix64* rng = nullptr);

/// Dequantized value of one element, in double precision.
double dequantize_element(uint8_t code, const FormatSpec& spec, uint8_t scale_byte,
                          float alpha);

std::vector<double> dequantize_block(std::span<const uint8_t> codes, uint8_t scale_byte,
                                     float alpha, const FormatSpec& spec);

/// Packed block-scaled tensor. Every row stores ceil(cols / block_size)
/// whole blocks; padded positions hold zero codes.
struct QuantizedTensor {
  uint16_t format_id = 0;
  std::vector<std::size_t> shape;
  float alpha = 1.0f;
  std::vector<uint8_t> scale_bytes;   // one per block, row-major
  std::vector<uint8_t> packed_codes;  // little-endian bit stream

  const FormatSpec& spec() const { return builtin_format(format_id); }
  std::size_t cols() const { return shape.back(); }
  std::size_t rows() const;
  std::size_t blocks_per_row() const;
  std::size_t num_blocks() const { return rows() * blocks_per_row(); }
  /// Number of stored codes including padding.
  std::size_t num_codes() const;
  std::size_t code_bytes() const;

  uint8_t code(std::size_t row, std::size_t col) const;

  bool operator==(const QuantizedTensor&) const = default;
};

struct QuantizeOptions {
  Rounding rounding = Rounding::kNearestEven;
  double scale_unbias = 1.0;
  uint64_t seed = 0;              // stochastic substreams derive from (seed, block)
  std::optional<float> alpha;     // overrides the computed tensor scale
  unsigned threads = 1;
};

struct QuantizeStats {
  std::size_t blocks = 0;
  std::size_t int_blocks = 0;     // chose_int count
  double sq_error = 0.0;          // over real (unpadded) elements
  std::size_t elements = 0;
  std::vector<double> block_errors;  // per block, row-major
  std::vector<uint8_t> block_chose_int;

  double mse() const { return elements ? sq_error / static_cast<double>(elements) : 0.0; }
  double int_rate() const {
    return blocks ? static_cast<double>(int_blocks) / static_cast<double>(blocks) : 0.0;
  }
};

QuantizedTensor quantize(const Tensor& x, const FormatSpec& spec,
                         const QuantizeOptions& opts = {},
                         QuantizeStats* stats = nullptr);

/// Throws CorruptData when an indicator bit is set on a non-adaptive format
/// or a scale byte is a NaN code.
Tensor dequantize(const QuantizedTensor& q);

/// Throws CorruptData on inconsistent section sizes or format id.
void check_layout(const QuantizedTensor& q);

}  // namespace absd
