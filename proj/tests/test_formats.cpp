// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include "absd/formats.hpp"
#include "absd/rng.hpp"

using namespace absd;

namespace {

// Bit-field decode of an unsigned EeMm magnitude, written out independently
// of the library tables.
double minifloat(unsigned code, int m_bits, int bias) {
  const unsigned e = code >> m_bits;
  const unsigned m = code & ((1u << m_bits) - 1);
  const double frac = static_cast<double>(m) / static_cast<double>(1u << m_bits);
  if (e == 0) return std::ldexp(frac, 1 - bias);
  return std::ldexp(1.0 + frac, static_cast<int>(e) - bias);
}

// Nearest E4M3 magnitude code by enumeration, ties to the even code.
uint8_t e4m3_oracle(double v) {
  unsigned best = 0;
  double best_d = INFINITY;
  for (unsigned c = 0; c < 0x7F; ++c) {
    const double d = std::fabs(minifloat(c, 3, 7) - v);
    if (d < best_d || (d == best_d && (c & 1u) == 0)) {
      best = c;
      best_d = d;
    }
  }
  return static_cast<uint8_t>(best);
}

}  // namespace

TEST_CASE("element books match their bit-field definitions") {
  for (unsigned c = 0; c < 8; ++c) CHECK(fp4_e2m1().magnitudes[c] == minifloat(c, 1, 1));
  for (unsigned c = 0; c < 32; ++c) CHECK(fp6_e2m3().magnitudes[c] == minifloat(c, 3, 1));
  for (unsigned c = 0; c < 32; ++c) CHECK(fp6_e3m2().magnitudes[c] == minifloat(c, 2, 3));
  CHECK(fp3_e2m0().magnitudes == std::vector<double>{0, 1, 2, 4});
  CHECK(fp6_e2m3().max() == 7.5);
  CHECK(fp6_e3m2().max() == 28.0);
  CHECK(int3().max() == 3.0);
  CHECK(int4().max() == 7.0);
  CHECK(int6().max() == 31.0);
  for (unsigned c = 0; c < 0x7F; ++c) {
    CHECK(e4m3_magnitudes().magnitudes[c] == minifloat(c, 3, 7));
  }
  CHECK(e4m3_magnitudes().max() == 448.0);
  CHECK(e4m3_magnitudes().min_nonzero() == std::ldexp(1.0, -9));
}

TEST_CASE("decode examples") {
  CHECK(fp4_e2m1().decode(0b0111) == 6.0);
  CHECK(fp4_e2m1().decode(0b1111) == -6.0);
  const double nz = fp4_e2m1().decode(0b1000);
  CHECK(nz == 0.0);
  CHECK_FALSE(std::signbit(nz));
  CHECK(int4().decode(0b0111) == 7.0);
  CHECK(int4().decode(0b1001) == -7.0);
  CHECK(int4().decode(0b1000) == -8.0);
  CHECK(int4().is_excluded(0b1000));
  CHECK(fp4_e2m1().is_excluded(0b1000));
  CHECK(int3().decode(0b101) == -3.0);
  CHECK(int6().decode(0b100001) == -31.0);
}

TEST_CASE("every non-excluded code round trips through its value") {
  for (const Codebook* book : {&fp4_e2m1(), &fp3_e2m0(), &fp6_e2m3(), &fp6_e3m2(), &int3(),
                               &int4(), &int6()}) {
    CAPTURE(book->name);
    std::set<double> values;
    for (unsigned c = 0; c < (1u << book->bits); ++c) {
      const auto code = static_cast<uint8_t>(c);
      if (book->is_excluded(code)) continue;
      const double v = book->decode(code);
      values.insert(v);
      CHECK(round_nearest(v, *book) == code);
    }
    CHECK(static_cast<int>(values.size()) == book->usable_values());
  }
  CHECK(fp4_e2m1().usable_values() == 15);
  CHECK(int4().usable_values() == 15);
}

TEST_CASE("round to nearest, ties to even, saturation") {
  const Codebook& fp4 = fp4_e2m1();
  CHECK(fp4.decode(round_nearest(5.0, fp4)) == 4.0);
  CHECK(fp4.decode(round_nearest(2.5, fp4)) == 2.0);
  CHECK(fp4.decode(round_nearest(3.5, fp4)) == 4.0);
  CHECK(fp4.decode(round_nearest(0.25, fp4)) == 0.0);
  CHECK(fp4.decode(round_nearest(0.75, fp4)) == 1.0);
  CHECK(fp4.decode(round_nearest(-5.1, fp4)) == -6.0);
  CHECK(fp4.decode(round_nearest(100.0, fp4)) == 6.0);
  CHECK(fp4.decode(round_nearest(-100.0, fp4)) == -6.0);
  CHECK(round_nearest(-0.1, fp4) == 0);
  CHECK(int4().decode(round_nearest(6.5, int4())) == 6.0);
  CHECK(int4().decode(round_nearest(-9.0, int4())) == -7.0);
  CHECK_THROWS_AS(round_nearest(NAN, fp4), std::invalid_argument);
  CHECK_THROWS_AS(round_nearest(INFINITY, fp4), std::invalid_argument);
}

TEST_CASE("stochastic rounding picks neighbours with linear probabilities") {
  const Codebook& fp4 = fp4_e2m1();
  CHECK(fp4.decode(round_stochastic(2.5, fp4, 0.49)) == 3.0);
  CHECK(fp4.decode(round_stochastic(2.5, fp4, 0.5)) == 2.0);
  CHECK(fp4.decode(round_stochastic(1.5, fp4, 0.0)) == 1.5);
  CHECK(fp4.decode(round_stochastic(1.5, fp4, 0.999)) == 1.5);
  CHECK(fp4.decode(round_stochastic(-5.0, fp4, 0.2)) == -6.0);
  CHECK(fp4.decode(round_stochastic(9.0, fp4, 0.0)) == 6.0);
  CHECK_THROWS_AS(round_to_codebook(1.0, fp4, Rounding::kStochastic, nullptr),
                  std::invalid_argument);

  SplitMix64 rng(42);
  const std::size_t trials = 100000;
  for (double x : {0.3, 2.5, -3.7, 5.9, 0.01}) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const double e = fp4.decode(round_to_codebook(x, fp4, Rounding::kStochastic, &rng)) - x;
      sum += e;
      sq += e * e;
    }
    const double mean = sum / trials;
    const double se = std::sqrt((sq / trials - mean * mean) / trials);
    CAPTURE(x);
    CHECK(std::fabs(mean) <= 4.0 * se);
  }
}

TEST_CASE("E4M3 and UE4M3 scale encoding") {
  CHECK(encode_scale(7.0, ue4m3_scale(), true) == 0xCE);
  CHECK(encode_scale(7.0, ue4m3_scale(), false) == 0x4E);
  CHECK(encode_scale(7.0, e4m3_scale()) == 0x4E);
  CHECK(encode_scale(500.0, e4m3_scale()) == 0x7E);
  CHECK(decode_scale(encode_scale(500.0, e4m3_scale()), e4m3_scale()).magnitude == 448.0);
  CHECK(encode_scale(std::ldexp(1.0, -10), e4m3_scale()) == 0x00);
  CHECK(encode_scale(std::ldexp(3.0, -11), e4m3_scale()) == 0x01);
  CHECK(encode_scale(0.0, e4m3_scale()) == 0x00);

  CHECK_THROWS_AS(encode_scale(NAN, e4m3_scale()), std::invalid_argument);
  CHECK_THROWS_AS(encode_scale(-1.0, e4m3_scale()), std::invalid_argument);
  CHECK_THROWS_AS(encode_scale(1.0, e4m3_scale(), true), std::invalid_argument);
  CHECK_THROWS_AS(decode_scale(0x7F, e4m3_scale()), std::invalid_argument);
  CHECK_THROWS_AS(decode_scale(0xFF, ue4m3_scale()), std::invalid_argument);

  const auto d = decode_scale(0xCE, ue4m3_scale());
  CHECK(d.magnitude == 7.0);
  CHECK(d.sign_bit);

  // Every magnitude and every midpoint against the enumeration oracle.
  for (unsigned c = 0; c < 0x7F; ++c) {
    const double v = minifloat(c, 3, 7);
    for (bool ind : {false, true}) {
      const uint8_t b = encode_scale(v, ue4m3_scale(), ind);
      CHECK(b == (c | (ind ? 0x80u : 0u)));
      const auto back = decode_scale(b, ue4m3_scale());
      CHECK(back.magnitude == v);
      CHECK(back.sign_bit == ind);
    }
    if (c + 1 < 0x7F) {
      const double mid = 0.5 * (v + minifloat(c + 1, 3, 7));
      CHECK(encode_scale(mid, e4m3_scale()) == e4m3_oracle(mid));
    }
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logu(-12.0, 9.0);
  for (int i = 0; i < 20000; ++i) {
    const double v = std::exp2(logu(rng));
    const uint8_t want = v >= 448.0 ? 0x7E : e4m3_oracle(v);
    CHECK(encode_scale(v, e4m3_scale()) == want);
  }
}

TEST_CASE("UE8M0 scale encoding") {
  for (int e = -127; e <= 127; ++e) {
    const uint8_t b = encode_scale(std::ldexp(1.0, e), ue8m0_scale());
    CHECK(b == e + 127);
    CHECK(decode_scale(b, ue8m0_scale()).magnitude == std::ldexp(1.0, e));
  }
  CHECK(encode_scale(3.0, ue8m0_scale()) == 128);
  CHECK_THROWS_AS(decode_scale(0xFF, ue8m0_scale()), std::invalid_argument);
  CHECK_THROWS_AS(encode_scale(1.0, ue8m0_scale(), true), std::invalid_argument);
}

TEST_CASE("builtin registry") {
  CHECK(builtin_format_names().size() == 23);
  for (std::size_t i = 0; i < builtin_format_names().size(); ++i) {
    const FormatSpec& spec = builtin_format(builtin_format_names()[i]);
    CAPTURE(spec.name);
    CHECK(spec.id == i);
    CHECK(&builtin_format(static_cast<uint16_t>(i)) == &spec);
    CHECK((spec.block_size == 8 || spec.block_size == 16 || spec.block_size == 32));
    if (spec.adaptive()) {
      CHECK(spec.scale.sign_bit_role == SignBitRole::kFormatIndicator);
      CHECK(spec.float_book.has_value());
      CHECK(spec.int_book.has_value());
      CHECK(spec.float_book->bits == spec.int_book->bits);
      CHECK(spec.align_descale.value() == spec.float_book->max() / spec.int_book->max());
    }
    CHECK(spec.elem_max == spec.primary().max());
  }

  const FormatSpec& if4 = builtin_format("IF4");
  CHECK(if4.block_size == 16);
  CHECK(if4.scale.kind == ScaleKind::kUE4M3);
  CHECK(if4.align_descale.num == 6);
  CHECK(if4.align_descale.den == 7);
  CHECK(builtin_format("IF3").align_descale.value() == 4.0 / 3.0);
  CHECK(builtin_format("IF6-E2M3").align_descale.value() == 7.5 / 31.0);
  CHECK(builtin_format("IF6-E3M2").align_descale.value() == 28.0 / 31.0);

  const FormatSpec& mx = builtin_format("MXFP4");
  CHECK(mx.block_size == 32);
  CHECK(mx.mx());
  CHECK(mx.scale_max == std::ldexp(1.0, 127));
  CHECK(builtin_format("NVFP4").scale_max == 448.0);
  CHECK(builtin_format("NVFP4-46").four_six());
  CHECK(builtin_format("IF4-BS8").block_size == 8);

  try {
    builtin_format("FP5");
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("FP5") != std::string::npos);
    CHECK(msg.find("NVFP4") != std::string::npos);
  }
  CHECK_THROWS_AS(builtin_format(uint16_t{23}), std::invalid_argument);
}

TEST_CASE("codebook reference lists every book") {
  const std::string ref = codebook_reference();
  for (const char* s : {"E2M1", "E2M0", "E2M3", "E3M2", "INT3", "INT4", "INT6", "UE8M0", "448"}) {
    CHECK(ref.find(s) != std::string::npos);
  }
}
