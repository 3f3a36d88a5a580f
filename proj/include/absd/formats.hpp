// SPDX-License-Identifier: Apache-2.0
//
// Element codebooks, scale encodings and the builtin block-scaled formats.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace absd {

class SplitMix64;

/// How a signed element value is laid out in its raw code.
enum class CodeLayout {
  kSignMagnitude,  // MSB is the sign, low bits index the magnitude table
  kTwosComplement  // plain two's complement integer
};

/// Ordered set of representable magnitudes for one element type.
///
/// Codes are `bits` wide including the sign. Sign-magnitude books never
/// produce negative zero; two's complement books never produce -2^(bits-1).
struct Codebook {
  std::string name;
  std::vector<double> magnitudes;  // strictly increasing, magnitudes[0] == 0
  int bits = 0;
  CodeLayout layout = CodeLayout::kSignMagnitude;
  std::vector<uint8_t> excluded_codes;

  double max() const { return magnitudes.back(); }
  double min_nonzero() const { return magnitudes[1]; }
  bool has_sign_bit() const { return layout == CodeLayout::kSignMagnitude; }
  uint8_t code_mask() const { return static_cast<uint8_t>((1u << bits) - 1); }

  /// Number of distinct usable signed values (zero counted once).
  int usable_values() const {
    return 2 * (static_cast<int>(magnitudes.size()) - 1) + 1;
  }

  /// Code for +/- magnitudes[index].
  uint8_t encode(std::size_t index, bool negative) const;

  /// Total over the bit domain; negative zero decodes to 0.0 and the
  /// two's complement minimum decodes to -2^(bits-1).
  double decode(uint8_t code) const;

  bool is_excluded(uint8_t code) const;
};

enum class Rounding { kNearestEven, kStochastic };

/// Round-to-nearest onto the codebook, ties to the even magnitude index.
/// |x| above the book maximum saturates.
uint8_t round_nearest(double x, const Codebook& book);

/// Stochastic rounding with an explicit uniform draw u in [0, 1): picks the
/// upper neighbour with probability (|x| - lo) / (hi - lo).
uint8_t round_stochastic(double x, const Codebook& book, double u);

/// Dispatches on mode; `rng` is required for kStochastic.
uint8_t round_to_codebook(double x, const Codebook& book, Rounding mode,
                          SplitMix64* rng = nullptr);

// Element books.
const Codebook& fp4_e2m1();
const Codebook& fp3_e2m0();
const Codebook& fp6_e2m3();
const Codebook& fp6_e3m2();
const Codebook& int3();
const Codebook& int4();
const Codebook& int6();

/// The 127 non-negative finite E4M3 magnitudes, indexed by their 7-bit code.
const Codebook& e4m3_magnitudes();

enum class ScaleKind { kE4M3, kUE4M3, kUE8M0 };
enum class SignBitRole { kNumericSign, kFormatIndicator, kAbsent };

struct ScaleType {
  ScaleKind kind = ScaleKind::kE4M3;
  double max_value = 0.0;
  double min_subnormal = 0.0;
  SignBitRole sign_bit_role = SignBitRole::kNumericSign;
};

const ScaleType& e4m3_scale();
const ScaleType& ue4m3_scale();
const ScaleType& ue8m0_scale();

struct DecodedScale {
  double magnitude = 0.0;
  bool sign_bit = false;
};

/// Encodes a non-negative scale. E4M3/UE4M3 round to nearest even with
/// saturation at 448; UE8M0 stores floor(log2(value)) + 127, clamped.
/// Throws std::invalid_argument on NaN, negative input, or an indicator
/// request on a type whose sign bit is not a format indicator.
uint8_t encode_scale(double value, const ScaleType& st, bool indicator = false);

/// Throws std::invalid_argument on a NaN code.
DecodedScale decode_scale(uint8_t byte, const ScaleType& st);

/// Per-block choice rule.
enum class Selection {
  kNone,      // single codebook
  kIntFloat,  // float vs aligned integer, flagged by the scale sign bit
  kFourSix    // scale to element max 6 or 4, no flag
};

/// Exact rational alignment factor applied to integer-coded blocks.
struct Ratio {
  int64_t num = 1;
  int64_t den = 1;
  double value() const {
    return static_cast<double>(num) / static_cast<double>(den);
  }
};

struct FormatSpec {
  std::string name;
  uint16_t id = 0;
  int block_size = 16;
  ScaleType scale;
  std::optional<Codebook> float_book;
  std::optional<Codebook> int_book;
  Selection selection = Selection::kNone;
  Ratio align_descale;      // elem_max / int max for adaptive formats
  double elem_max = 0.0;    // element maximum used in the scale equations
  double scale_max = 0.0;   // largest block scale

  bool adaptive() const { return selection == Selection::kIntFloat; }
  bool four_six() const { return selection == Selection::kFourSix; }
  bool mx() const { return scale.kind == ScaleKind::kUE8M0; }

  /// The codebook used by non-adaptive blocks and by the float path.
  const Codebook& primary() const { return float_book ? *float_book : *int_book; }

  int code_bits() const { return primary().bits; }

  /// Smallest non-zero element magnitude over every path.
  double elem_min_nonzero() const;
};

/// All 23 builtin names, in format-id order.
std::span<const std::string_view> builtin_format_names();

/// Throws std::invalid_argument listing valid names when unknown.
const FormatSpec& builtin_format(std::string_view name);
const FormatSpec& builtin_format(uint16_t id);

/// Text reference listing every codebook and the scale grids bit-for-bit.
std::string codebook_reference();

}  // namespace absd
