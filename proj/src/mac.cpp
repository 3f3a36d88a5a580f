// SPDX-License-Identifier: Apache-2.0

#include "absd/mac.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "absd/quantizer.hpp"

namespace absd {

namespace {

// FP4 E2M1 magnitudes in units of 0.5.
constexpr std::array<int16_t, 8> kFp4Lut = {0, 1, 2, 3, 4, 6, 8, 12};

int16_t decode_fp4(uint8_t code) {
  const int16_t mag = kFp4Lut[code & 0x7];
  return (code & 0x8) ? static_cast<int16_t>(-mag) : mag;
}

int16_t decode_int4(uint8_t code) {
  const int v = (code & 0x8) ? static_cast<int>(code & 0xF) - 16 : (code & 0xF);
  return static_cast<int16_t>(v * 2);
}

float decode_e4m3_magnitude(uint8_t byte) {
  if ((byte & 0x7F) == 0x7F) return std::numeric_limits<float>::quiet_NaN();
  return static_cast<float>(e4m3_magnitudes().magnitudes[byte & 0x7F]);
}

MacResult run(BlockCodes w, BlockCodes a, uint8_t ws, uint8_t as, float acc, bool adaptive) {
  MacResult out;
  MacTrace& t = out.trace;
  t.w_int = adaptive && (ws & 0x80);
  t.a_int = adaptive && (as & 0x80);
  for (std::size_t i = 0; i < kMacWidth; ++i) {
    t.decoded_w[i] = t.w_int ? decode_int4(w[i]) : decode_fp4(w[i]);
    t.decoded_a[i] = t.a_int ? decode_int4(a[i]) : decode_fp4(a[i]);
    t.products[i] = half_mul(half_from_double(t.decoded_w[i] * 0.5),
                             half_from_double(t.decoded_a[i] * 0.5));
  }
  t.unified_scale = decode_e4m3_magnitude(ws) * decode_e4m3_magnitude(as);
  if (t.w_int && t.a_int) {
    t.alignment = 36.0f / 49.0f;
  } else if (t.w_int || t.a_int) {
    t.alignment = 6.0f / 7.0f;
  } else {
    t.alignment = 1.0f;
  }
  t.aligned_scale = t.unified_scale * t.alignment;
  t.acc_in = acc;
  for (std::size_t i = 0; i < kMacWidth; ++i) {
    t.scaled_products[i] = half_to_float(t.products[i]) * t.aligned_scale;
    acc = acc + t.scaled_products[i];
  }
  t.accumulator = acc;
  out.acc = acc;
  return out;
}

}  // namespace

Half half_from_double(double x) {
  const uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double a = std::fabs(x);
  if (std::isnan(x)) return {static_cast<uint16_t>(sign | 0x7E00)};
  // 65520 is the midpoint between 65504 and 2^16; ties go to the even
  // (infinite) side.
  if (a >= 65520.0) return {static_cast<uint16_t>(sign | 0x7C00)};
  if (a < 0x1p-14) {
    const auto m = static_cast<uint16_t>(std::nearbyint(a * 0x1p24));
    return {static_cast<uint16_t>(sign | m)};
  }
  int exp = 0;
  std::frexp(a, &exp);
  int e = exp - 1;
  auto m = static_cast<uint32_t>(std::nearbyint(std::ldexp(a, 10 - e)));
  if (m == 2048) {
    m = 1024;
    ++e;
  }
  return {static_cast<uint16_t>(sign | ((e + 15) << 10) | (m - 1024))};
}

double half_to_double(Half h) {
  const bool neg = h.bits & 0x8000;
  const int e = (h.bits >> 10) & 0x1F;
  const int m = h.bits & 0x3FF;
  double v;
  if (e == 0x1F) {
    v = m ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  } else if (e == 0) {
    v = std::ldexp(static_cast<double>(m), -24);
  } else {
    v = std::ldexp(static_cast<double>(m + 1024), e - 25);
  }
  return neg ? -v : v;
}

Half half_mul(Half a, Half b) {
  // 11-bit x 11-bit significands multiply exactly in double.
  return half_from_double(half_to_double(a) * half_to_double(b));
}

double ulp32(double x) {
  const double a = std::fabs(x);
  if (a < 0x1p-126) return 0x1p-149;
  int exp = 0;
  std::frexp(a, &exp);
  return std::ldexp(1.0, exp - 24);
}

MacResult mac_if4(BlockCodes w_codes, BlockCodes a_codes, uint8_t w_scale, uint8_t a_scale,
                  float acc) {
  return run(w_codes, a_codes, w_scale, a_scale, acc, true);
}

MacResult mac_nvfp4(BlockCodes w_codes, BlockCodes a_codes, uint8_t w_scale,
                    uint8_t a_scale, float acc) {
  if ((w_scale | a_scale) & 0x80) {
    throw std::invalid_argument("NVFP4 MAC received a scale byte with its sign bit set");
  }
  return run(w_codes, a_codes, w_scale, a_scale, acc, false);
}

double oracle_dot(BlockCodes w_codes, BlockCodes a_codes, uint8_t w_scale, uint8_t a_scale,
                  const FormatSpec& spec) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kMacWidth; ++i) {
    sum += dequantize_element(w_codes[i], spec, w_scale, 1.0f) *
           dequantize_element(a_codes[i], spec, a_scale, 1.0f);
  }
  return sum;
}

std::string dump_trace(const MacTrace& t) {
  auto f32 = [](float v) { return fmt::format("{:08x}", std::bit_cast<uint32_t>(v)); };
  auto fixed = [](const std::array<int16_t, kMacWidth>& v) {
    std::string s;
    for (int16_t x : v) s += fmt::format(" {:04x}", static_cast<uint16_t>(x));
    return s;
  };
  std::string out;
  out += fmt::format("path w={} a={}\n", t.w_int ? "INT" : "FP", t.a_int ? "INT" : "FP");
  out += "decoded_w" + fixed(t.decoded_w) + "\n";
  out += "decoded_a" + fixed(t.decoded_a) + "\n";
  out += "products";
  for (Half h : t.products) out += fmt::format(" {:04x}", h.bits);
  out += "\nunified_scale " + f32(t.unified_scale) + "\n";
  out += "alignment " + f32(t.alignment) + "\n";
  out += "aligned_scale " + f32(t.aligned_scale) + "\n";
  out += "scaled_products";
  for (float v : t.scaled_products) out += " " + f32(v);
  out += "\nacc_in " + f32(t.acc_in) + "\n";
  out += "accumulator " + f32(t.accumulator) + "\n";
  return out;
}

}  // namespace absd
