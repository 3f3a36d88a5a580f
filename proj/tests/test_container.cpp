// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <vector>

#include "absd/container.hpp"
#include "support.hpp"

using namespace absd;

namespace {

QuantizedTensor golden() {
  Tensor x({4}, {6, 18, 36, 42});
  QuantizeOptions o;
  o.alpha = 1.0f;
  return quantize(x, builtin_format("IF4"), o);
}

}  // namespace

TEST_CASE("golden block container bytes") {
  const QuantizedTensor q = golden();
  CHECK(q.packed_codes.size() == 8);
  CHECK(q.packed_codes[0] == 0x31);
  CHECK(q.packed_codes[1] == 0x76);
  for (std::size_t i = 2; i < 8; ++i) CHECK(q.packed_codes[i] == 0);
  CHECK(q.scale_bytes == std::vector<uint8_t>{0xCE});

  const auto bytes = write_absd(q);
  const std::vector<uint8_t> want{
      'A', 'B', 'S', 'D', 1, 0,                      // magic, version
      static_cast<uint8_t>(builtin_format("IF4").id), 0,  // format id
      1, 0,                                          // rank
      4, 0, 0, 0, 0, 0, 0, 0,                        // dim
      0x00, 0x00, 0x80, 0x3F,                        // alpha = 1.0f
      0xCE,                                          // scale
      0x31, 0x76, 0, 0, 0, 0, 0, 0};                 // codes
  CHECK(bytes == want);
  CHECK(read_absd(bytes) == q);
  const Tensor d = dequantize(read_absd(bytes));
  CHECK(d.data == std::vector<float>{6, 18, 36, 42});
}

TEST_CASE("reader rejects malformed streams") {
  const auto good = write_absd(golden());

  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  bad = good;
  bad[4] = 2;
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  bad = good;
  bad[6] = 99;
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  bad = good;
  bad[8] = 0;
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  bad = good;
  bad[10] = 0;
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  bad = good;
  bad[17] = 0x40;  // enormous dim
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  for (std::size_t cut = 0; cut < good.size(); ++cut) {
    CHECK_THROWS_AS(read_absd(std::span(good).first(cut)), CorruptData);
  }
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  bad = good;
  bad[22] = 0x7F;  // NaN scale
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  bad = good;
  bad[25] = 0x01;  // padding code
  CHECK_THROWS_AS(read_absd(bad), CorruptData);

  Tensor x({16}, std::vector<float>(16, 1.0f));
  const QuantizedTensor nv = quantize(x, builtin_format("NVFP4"));
  auto nvb = write_absd(nv);
  nvb[22] |= 0x80;
  CHECK_THROWS_AS(read_absd(nvb), CorruptData);

  QuantizedTensor scalar = golden();
  scalar.shape.clear();
  CHECK_THROWS_AS(write_absd(scalar), CorruptData);
  QuantizedTensor shortcodes = golden();
  shortcodes.packed_codes.pop_back();
  CHECK_THROWS_AS(write_absd(shortcodes), CorruptData);
}

TEST_CASE("bit packing for 3, 4 and 6 bit codes") {
  for (int bits : {3, 4, 6}) {
    CAPTURE(bits);
    const std::size_t n = 8;
    std::vector<uint8_t> bytes(n * bits / 8, 0);
    uint64_t expect = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto code = static_cast<uint8_t>((i * 5 + 3) & ((1u << bits) - 1));
      set_packed(bytes, i, bits, code);
      expect |= static_cast<uint64_t>(code) << (i * bits);
    }
    for (std::size_t b = 0; b < bytes.size(); ++b) {
      CHECK(bytes[b] == static_cast<uint8_t>(expect >> (8 * b)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (unsigned c = 0; c < (1u << bits); ++c) {
        auto copy = bytes;
        set_packed(copy, i, bits, static_cast<uint8_t>(c));
        CHECK(get_packed(copy, i, bits) == c);
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) CHECK(get_packed(copy, j, bits) == get_packed(bytes, j, bits));
        }
      }
    }
  }
  Tensor x8({8}, std::vector<float>(8, 1.0f));
  CHECK(quantize(x8, builtin_format("IF3-BS8")).packed_codes.size() == 3);
  Tensor x32({32}, std::vector<float>(32, 1.0f));
  CHECK(quantize(x32, builtin_format("MXFP6-E3M2")).packed_codes.size() == 24);
}

TEST_CASE("fuzzed containers round trip") {
  std::mt19937_64 rng(123);
  for (int i = 0; i < 2000; ++i) {
    const QuantizedTensor q = test::random_quantized(rng);
    const auto bytes = write_absd(q);
    const QuantizedTensor back = read_absd(bytes);
    CHECK(back == q);
    CHECK(write_absd(back) == bytes);
  }
}

TEST_CASE("raw float32 files") {
  const std::vector<uint8_t> one{0x00, 0x00, 0x80, 0x3F};
  const Tensor t = read_raw_f32(one, {1});
  CHECK(t.data == std::vector<float>{1.0f});
  CHECK(write_raw_f32(t.data) == one);
  CHECK_THROWS_AS(read_raw_f32(one, {2}), std::invalid_argument);
  CHECK_THROWS_AS(read_raw_f32(std::span(one).first(3), {1}), std::invalid_argument);

  const auto dir = std::filesystem::temp_directory_path() / "absd_container_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "x.absd").string();
  const auto bytes = write_absd(golden());
  write_file_atomic(path, bytes);
  CHECK(read_file(path) == bytes);
  CHECK_THROWS(read_file((dir / "missing").string()));
  std::filesystem::remove_all(dir);
}
