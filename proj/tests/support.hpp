// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test binaries: grid-constructed tensors whose every
// element is exactly representable under a format, and random well-formed
// quantized tensors for container fuzzing.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "absd/formats.hpp"
#include "absd/quantizer.hpp"
#include "absd/tensor.hpp"

namespace absd::test {

/// Random element from the primary book, scaled by `scale`.
inline float grid_value(const Codebook& book, double scale, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, book.magnitudes.size() - 1);
  std::bernoulli_distribution neg(0.5);
  const double v = book.magnitudes[pick(rng)] * scale;
  return static_cast<float>(neg(rng) ? -v : v);
}

/// A tensor on the representable grid of `spec` with alpha forced to 1.
///
/// Every block carries an element at +/- elem_max * scale in its first slot so
/// the block scale is recovered exactly; the first block uses the largest
/// scale that makes the tensor scale exactly 1.
inline Tensor make_grid_tensor(const FormatSpec& spec, std::size_t rows, std::size_t cols,
                               uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Codebook& book = spec.primary();
  const std::size_t bs = static_cast<std::size_t>(spec.block_size);
  const double top = spec.four_six() ? 256.0 : spec.scale_max;

  const auto& e4m3 = e4m3_magnitudes().magnitudes;
  std::vector<double> scales;
  for (std::size_t i = 1; i < e4m3.size(); ++i) {
    if (e4m3[i] <= top) scales.push_back(e4m3[i]);
  }
  std::uniform_int_distribution<std::size_t> pick_scale(0, scales.size() - 1);
  std::uniform_int_distribution<int> pick_exp(-20, 20);
  std::bernoulli_distribution neg(0.5);

  Tensor t({rows, cols}, std::vector<float>(rows * cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c0 = 0; c0 < cols; c0 += bs) {
      double scale;
      if (spec.mx()) {
        scale = std::ldexp(1.0, pick_exp(rng));
      } else if (r == 0 && c0 == 0) {
        scale = top;
      } else {
        scale = scales[pick_scale(rng)];
      }
      const std::size_t end = std::min(cols, c0 + bs);
      float* row = t.data.data() + r * cols;
      const double peak = spec.elem_max * scale;
      row[c0] = static_cast<float>(neg(rng) ? -peak : peak);
      for (std::size_t c = c0 + 1; c < end; ++c) row[c] = grid_value(book, scale, rng);
    }
  }
  return t;
}

/// A random but well-formed quantized tensor: valid scale bytes, arbitrary
/// codes in real positions, zero codes in padding.
inline QuantizedTensor random_quantized(std::mt19937_64& rng) {
  const auto names = builtin_format_names();
  std::uniform_int_distribution<std::size_t> pick_fmt(0, names.size() - 1);
  const FormatSpec& spec = builtin_format(static_cast<uint16_t>(pick_fmt(rng)));

  QuantizedTensor q;
  q.format_id = spec.id;
  std::uniform_int_distribution<int> pick_rank(1, 3);
  std::uniform_int_distribution<std::size_t> pick_dim(1, 40);
  const int rank = pick_rank(rng);
  for (int i = 0; i < rank; ++i) q.shape.push_back(pick_dim(rng));
  std::uniform_real_distribution<float> pick_alpha(1e-6f, 1e3f);
  q.alpha = pick_alpha(rng);

  std::uniform_int_distribution<int> byte(0, 255);
  q.scale_bytes.resize(q.num_blocks());
  for (auto& s : q.scale_bytes) {
    uint8_t b;
    do {
      b = static_cast<uint8_t>(byte(rng));
      if (spec.scale.kind == ScaleKind::kE4M3) b &= 0x7F;
    } while ((spec.mx() && b == 0xFF) || (!spec.mx() && (b & 0x7F) == 0x7F));
    s = b;
  }

  q.packed_codes.assign(q.code_bytes(), 0);
  const std::size_t padded = q.blocks_per_row() * static_cast<std::size_t>(spec.block_size);
  const int bits = spec.code_bits();
  for (std::size_t r = 0; r < q.rows(); ++r) {
    for (std::size_t c = 0; c < q.cols(); ++c) {
      const auto code = static_cast<uint8_t>(byte(rng) & ((1 << bits) - 1));
      set_packed(q.packed_codes, r * padded + c, bits, code);
    }
  }
  return q;
}

}  // namespace absd::test
