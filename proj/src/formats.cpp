// SPDX-License-Identifier: Apache-2.0

#include "absd/formats.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "absd/rng.hpp"

namespace absd {

namespace {

// Minifloat grid with no inf/NaN encodings: exponent bias 2^(e-1) - 1,
// subnormals at exponent field 0. Index order equals code order.
Codebook make_float_book(std::string name, int exp_bits, int man_bits) {
  const int bias = (1 << (exp_bits - 1)) - 1;
  Codebook book;
  book.name = std::move(name);
  book.bits = 1 + exp_bits + man_bits;
  book.layout = CodeLayout::kSignMagnitude;
  for (int e = 0; e < (1 << exp_bits); ++e) {
    for (int m = 0; m < (1 << man_bits); ++m) {
      const double frac = std::ldexp(static_cast<double>(m), -man_bits);
      if (e == 0) {
        // With zero mantissa bits the only subnormal is zero itself.
        if (man_bits == 0 && m == 0) {
          book.magnitudes.push_back(0.0);
        } else if (man_bits > 0) {
          book.magnitudes.push_back(std::ldexp(frac, 1 - bias));
        }
      } else {
        book.magnitudes.push_back(std::ldexp(1.0 + frac, e - bias));
      }
    }
  }
  book.excluded_codes.push_back(static_cast<uint8_t>(1u << (book.bits - 1)));
  return book;
}

Codebook make_int_book(std::string name, int bits) {
  Codebook book;
  book.name = std::move(name);
  book.bits = bits;
  book.layout = CodeLayout::kTwosComplement;
  for (int v = 0; v < (1 << (bits - 1)); ++v) {
    book.magnitudes.push_back(static_cast<double>(v));
  }
  book.excluded_codes.push_back(static_cast<uint8_t>(1u << (bits - 1)));
  return book;
}

Codebook make_e4m3_book() {
  Codebook book;
  book.name = "E4M3";
  book.bits = 8;
  book.layout = CodeLayout::kSignMagnitude;
  for (int code = 0; code < 0x7F; ++code) {
    const int e = code >> 3;
    const int m = code & 7;
    book.magnitudes.push_back(e == 0 ? std::ldexp(m / 8.0, -6)
                                     : std::ldexp(1.0 + m / 8.0, e - 7));
  }
  book.excluded_codes = {0x7F, 0x80, 0xFF};
  return book;
}

// Index of the largest magnitude <= a; a must be below book.max().
std::size_t floor_index(double a, const Codebook& book) {
  auto it = std::upper_bound(book.magnitudes.begin(), book.magnitudes.end(), a);
  return static_cast<std::size_t>(it - book.magnitudes.begin()) - 1;
}

void check_finite(double x) {
  if (!std::isfinite(x)) {
    throw std::invalid_argument("cannot round a non-finite value to a codebook");
  }
}

}  // namespace

uint8_t Codebook::encode(std::size_t index, bool negative) const {
  const bool neg = negative && index != 0;
  if (layout == CodeLayout::kSignMagnitude) {
    return static_cast<uint8_t>((neg ? 1u << (bits - 1) : 0u) | index);
  }
  const int v = neg ? -static_cast<int>(index) : static_cast<int>(index);
  return static_cast<uint8_t>(v) & code_mask();
}

double Codebook::decode(uint8_t code) const {
  code &= code_mask();
  if (layout == CodeLayout::kSignMagnitude) {
    const uint8_t sign = static_cast<uint8_t>(1u << (bits - 1));
    const double mag = magnitudes[code & (sign - 1)];
    return (code & sign) && mag != 0.0 ? -mag : mag;
  }
  int v = code;
  if (v & (1 << (bits - 1))) v -= 1 << bits;
  return static_cast<double>(v);
}

bool Codebook::is_excluded(uint8_t code) const {
  return std::find(excluded_codes.begin(), excluded_codes.end(), code) !=
         excluded_codes.end();
}

uint8_t round_nearest(double x, const Codebook& book) {
  check_finite(x);
  const double a = std::fabs(x);
  std::size_t idx;
  if (a >= book.max()) {
    idx = book.magnitudes.size() - 1;
  } else {
    const std::size_t lo = floor_index(a, book);
    const std::size_t hi = lo + 1;
    const double d_lo = a - book.magnitudes[lo];
    const double d_hi = book.magnitudes[hi] - a;
    idx = (d_hi < d_lo || (d_hi == d_lo && hi % 2 == 0)) ? hi : lo;
  }
  return book.encode(idx, std::signbit(x));
}

uint8_t round_stochastic(double x, const Codebook& book, double u) {
  check_finite(x);
  const double a = std::fabs(x);
  std::size_t idx;
  if (a >= book.max()) {
    idx = book.magnitudes.size() - 1;
  } else {
    const std::size_t lo = floor_index(a, book);
    const double p = (a - book.magnitudes[lo]) /
                     (book.magnitudes[lo + 1] - book.magnitudes[lo]);
    idx = u < p ? lo + 1 : lo;
  }
  return book.encode(idx, std::signbit(x));
}

uint8_t round_to_codebook(double x, const Codebook& book, Rounding mode,
                          SplitMix64* rng) {
  if (mode == Rounding::kNearestEven) return round_nearest(x, book);
  if (rng == nullptr) {
    throw std::invalid_argument("stochastic rounding requires an RNG");
  }
  return round_stochastic(x, book, rng->uniform());
}

const Codebook& fp4_e2m1() {
  static const Codebook book = make_float_book("E2M1", 2, 1);
  return book;
}
const Codebook& fp3_e2m0() {
  static const Codebook book = make_float_book("E2M0", 2, 0);
  return book;
}
const Codebook& fp6_e2m3() {
  static const Codebook book = make_float_book("E2M3", 2, 3);
  return book;
}
const Codebook& fp6_e3m2() {
  static const Codebook book = make_float_book("E3M2", 3, 2);
  return book;
}
const Codebook& int3() {
  static const Codebook book = make_int_book("INT3", 3);
  return book;
}
const Codebook& int4() {
  static const Codebook book = make_int_book("INT4", 4);
  return book;
}
const Codebook& int6() {
  static const Codebook book = make_int_book("INT6", 6);
  return book;
}
const Codebook& e4m3_magnitudes() {
  static const Codebook book = make_e4m3_book();
  return book;
}

const ScaleType& e4m3_scale() {
  static const ScaleType st{ScaleKind::kE4M3, 448.0, std::ldexp(1.0, -9),
                            SignBitRole::kNumericSign};
  return st;
}
const ScaleType& ue4m3_scale() {
  static const ScaleType st{ScaleKind::kUE4M3, 448.0, std::ldexp(1.0, -9),
                            SignBitRole::kFormatIndicator};
  return st;
}
const ScaleType& ue8m0_scale() {
  static const ScaleType st{ScaleKind::kUE8M0, std::ldexp(1.0, 127),
                            std::ldexp(1.0, -127), SignBitRole::kAbsent};
  return st;
}

uint8_t encode_scale(double value, const ScaleType& st, bool indicator) {
  if (std::isnan(value) || value < 0.0) {
    throw std::invalid_argument(
        fmt::format("scale value must be non-negative, got {}", value));
  }
  if (indicator && st.sign_bit_role != SignBitRole::kFormatIndicator) {
    throw std::invalid_argument("scale type has no format-indicator bit");
  }
  if (st.kind == ScaleKind::kUE8M0) {
    if (value == 0.0) return 0;
    int exp = 0;
    std::frexp(value, &exp);
    const int e = std::clamp(exp - 1, -127, 127);
    return static_cast<uint8_t>(e + 127);
  }
  const uint8_t mag = round_nearest(std::min(value, st.max_value), e4m3_magnitudes());
  return indicator ? static_cast<uint8_t>(mag | 0x80) : mag;
}

DecodedScale decode_scale(uint8_t byte, const ScaleType& st) {
  if (st.kind == ScaleKind::kUE8M0) {
    if (byte == 0xFF) throw std::invalid_argument("UE8M0 NaN scale code");
    return {std::ldexp(1.0, static_cast<int>(byte) - 127), false};
  }
  if ((byte & 0x7F) == 0x7F) {
    throw std::invalid_argument(fmt::format("E4M3 NaN scale code 0x{:02X}", byte));
  }
  return {e4m3_magnitudes().magnitudes[byte & 0x7F], (byte & 0x80) != 0};
}

double FormatSpec::elem_min_nonzero() const {
  double m = primary().min_nonzero();
  if (adaptive()) m = std::min(m, int_book->min_nonzero() * align_descale.value());
  return m;
}

namespace {

constexpr std::array<std::string_view, 23> kNames = {
    "MXFP3",      "NVINT3",    "NVFP3",        "IF3",        "NVINT3-BS8",
    "NVFP3-BS8",  "IF3-BS8",   "MXFP4",        "NVINT4",     "NVFP4",
    "NVFP4-46",   "IF4",       "NVINT4-BS8",   "NVFP4-BS8",  "NVFP4-BS8-46",
    "IF4-BS8",    "MXFP6-E2M3", "MXFP6-E3M2",  "NVINT6",     "NVFP6-E2M3",
    "NVFP6-E3M2", "IF6-E2M3",  "IF6-E3M2"};

FormatSpec nv_float(std::string_view name, const Codebook& book, int bs) {
  FormatSpec f;
  f.name = name;
  f.block_size = bs;
  f.scale = e4m3_scale();
  f.float_book = book;
  f.elem_max = book.max();
  f.scale_max = 448.0;
  return f;
}

FormatSpec nv_int(std::string_view name, const Codebook& book, int bs) {
  FormatSpec f;
  f.name = name;
  f.block_size = bs;
  f.scale = e4m3_scale();
  f.int_book = book;
  f.elem_max = book.max();
  f.scale_max = 448.0;
  return f;
}

FormatSpec four_six(std::string_view name, int bs) {
  FormatSpec f = nv_float(name, fp4_e2m1(), bs);
  f.selection = Selection::kFourSix;
  return f;
}

FormatSpec int_float(std::string_view name, const Codebook& fbook,
                     const Codebook& ibook, int bs, Ratio align) {
  FormatSpec f;
  f.name = name;
  f.block_size = bs;
  f.scale = ue4m3_scale();
  f.float_book = fbook;
  f.int_book = ibook;
  f.selection = Selection::kIntFloat;
  f.align_descale = align;
  f.elem_max = fbook.max();
  f.scale_max = 448.0;
  return f;
}

FormatSpec mx(std::string_view name, const Codebook& book) {
  FormatSpec f;
  f.name = name;
  f.block_size = 32;
  f.scale = ue8m0_scale();
  f.float_book = book;
  f.elem_max = book.max();
  f.scale_max = ue8m0_scale().max_value;
  return f;
}

std::vector<FormatSpec> make_builtins() {
  std::vector<FormatSpec> v = {
      mx("MXFP3", fp3_e2m0()),
      nv_int("NVINT3", int3(), 16),
      nv_float("NVFP3", fp3_e2m0(), 16),
      int_float("IF3", fp3_e2m0(), int3(), 16, {4, 3}),
      nv_int("NVINT3-BS8", int3(), 8),
      nv_float("NVFP3-BS8", fp3_e2m0(), 8),
      int_float("IF3-BS8", fp3_e2m0(), int3(), 8, {4, 3}),
      mx("MXFP4", fp4_e2m1()),
      nv_int("NVINT4", int4(), 16),
      nv_float("NVFP4", fp4_e2m1(), 16),
      four_six("NVFP4-46", 16),
      int_float("IF4", fp4_e2m1(), int4(), 16, {6, 7}),
      nv_int("NVINT4-BS8", int4(), 8),
      nv_float("NVFP4-BS8", fp4_e2m1(), 8),
      four_six("NVFP4-BS8-46", 8),
      int_float("IF4-BS8", fp4_e2m1(), int4(), 8, {6, 7}),
      mx("MXFP6-E2M3", fp6_e2m3()),
      mx("MXFP6-E3M2", fp6_e3m2()),
      nv_int("NVINT6", int6(), 16),
      nv_float("NVFP6-E2M3", fp6_e2m3(), 16),
      nv_float("NVFP6-E3M2", fp6_e3m2(), 16),
      int_float("IF6-E2M3", fp6_e2m3(), int6(), 16, {15, 62}),
      int_float("IF6-E3M2", fp6_e3m2(), int6(), 16, {28, 31}),
  };
  for (std::size_t i = 0; i < v.size(); ++i) v[i].id = static_cast<uint16_t>(i);
  return v;
}

const std::vector<FormatSpec>& builtins() {
  static const std::vector<FormatSpec> v = make_builtins();
  return v;
}

std::string bits_string(unsigned code, int bits) {
  std::string s;
  for (int b = bits - 1; b >= 0; --b) s.push_back((code >> b) & 1 ? '1' : '0');
  return s;
}

}  // namespace

std::span<const std::string_view> builtin_format_names() { return kNames; }

const FormatSpec& builtin_format(std::string_view name) {
  for (const auto& f : builtins()) {
    if (f.name == name) return f;
  }
  throw std::invalid_argument(fmt::format("unknown format '{}'; valid names: {}",
                                          name, fmt::join(kNames, ", ")));
}

const FormatSpec& builtin_format(uint16_t id) {
  if (id >= builtins().size()) {
    throw std::invalid_argument(fmt::format("unknown format id {}", id));
  }
  return builtins()[id];
}

std::string codebook_reference() {
  std::string out;
  auto append_book = [&out](const Codebook& book) {
    out += fmt::format("[{}] bits={} layout={}\n", book.name, book.bits,
                       book.has_sign_bit() ? "sign-magnitude" : "twos-complement");
    for (unsigned code = 0; code < (1u << book.bits); ++code) {
      const auto c = static_cast<uint8_t>(code);
      out += fmt::format("  {}  0x{:02X}  {}{}\n", bits_string(code, book.bits), code,
                         book.decode(c), book.is_excluded(c) ? "  excluded" : "");
    }
  };
  out += "# Element codebooks\n";
  for (const Codebook* b : {&fp3_e2m0(), &int3(), &fp4_e2m1(), &int4(), &fp6_e2m3(),
                            &fp6_e3m2(), &int6()}) {
    append_book(*b);
  }
  out += "\n# Scale encodings\n[E4M3 / UE4M3] bits=8 (UE4M3: bit 7 is the INT indicator)\n";
  for (unsigned code = 0; code < 256; ++code) {
    const std::string bits = bits_string(code, 8);
    if ((code & 0x7F) == 0x7F) {
      out += fmt::format("  {}  0x{:02X}  NaN\n", bits, code);
    } else {
      const double m = e4m3_magnitudes().magnitudes[code & 0x7F];
      out += fmt::format("  {}  0x{:02X}  {}{}\n", bits, code, (code & 0x80) ? "-" : "", m);
    }
  }
  out += "[UE8M0] bits=8\n";
  for (unsigned code = 0; code < 256; ++code) {
    if (code == 0xFF) {
      out += fmt::format("  {}  0x{:02X}  NaN\n", bits_string(code, 8), code);
    } else {
      out += fmt::format("  {}  0x{:02X}  2^{}\n", bits_string(code, 8), code,
                         static_cast<int>(code) - 127);
    }
  }
  out += "\n# Formats\n";
  for (const auto& f : builtins()) {
    const char* scale = f.scale.kind == ScaleKind::kUE8M0   ? "UE8M0"
                        : f.scale.kind == ScaleKind::kUE4M3 ? "UE4M3"
                                                            : "E4M3";
    std::string books = f.float_book ? f.float_book->name : "";
    if (f.int_book) books += (books.empty() ? "" : " / ") + f.int_book->name;
    out += fmt::format("  id={:2} {:13} block={:2} scale={:5} elements={}", f.id, f.name,
                       f.block_size, scale, books);
    if (f.adaptive()) {
      out += fmt::format(" align={}/{}", f.align_descale.num, f.align_descale.den);
    }
    if (f.four_six()) out += " select=4/6";
    out += "\n";
  }
  return out;
}

}  // namespace absd
