// SPDX-License-Identifier: Apache-2.0
//
// Random Hadamard transform: y = (1/sqrt(n)) * H_n * diag(signs) * x with H_n
// the Sylvester Hadamard matrix, evaluated with the in-place fast
// Walsh-Hadamard butterfly.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "absd/tensor.hpp"

namespace absd {

struct HadamardConfig {
  std::size_t size = 16;
  std::vector<int8_t> signs;  // entries in {-1, +1}

  /// Random signs drawn from `seed`; throws unless size is a power of two.
  static HadamardConfig make(std::size_t size, uint64_t seed);
  /// All-positive signs (plain normalized Hadamard).
  static HadamardConfig identity_signs(std::size_t size);
};

/// Unnormalized in-place Walsh-Hadamard transform in natural (Sylvester) order.
void fwht(std::span<double> v);

std::vector<double> rht_forward(std::span<const double> x, const HadamardConfig& cfg);
std::vector<double> rht_inverse(std::span<const double> y, const HadamardConfig& cfg);

struct TransformedTensor {
  Tensor tensor;
  /// Trailing elements per row left untransformed because they do not fill
  /// a whole transform segment.
  std::size_t untransformed_tail = 0;
};

/// Applies the forward transform to consecutive cfg.size segments of every
/// row; the remainder of each row is passed through unchanged.
TransformedTensor rht_rows(const Tensor& x, const HadamardConfig& cfg);
TransformedTensor rht_rows_inverse(const Tensor& y, const HadamardConfig& cfg);

}  // namespace absd
