// SPDX-License-Identifier: Apache-2.0

#include "absd/transform.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <random>
#include <stdexcept>

namespace absd {

namespace {

void check_size(std::size_t size) {
  if (size == 0 || !std::has_single_bit(size)) {
    throw std::invalid_argument(
        fmt::format("Hadamard size must be a power of two, got {}", size));
  }
}

void check_input(std::size_t n, const HadamardConfig& cfg) {
  if (n != cfg.size || cfg.signs.size() != cfg.size) {
    throw std::invalid_argument(fmt::format(
        "Hadamard size mismatch: input {} vs transform {}", n, cfg.size));
  }
}

template <bool kInverse>
TransformedTensor apply_rows(const Tensor& x, const HadamardConfig& cfg) {
  validate(x);
  const std::size_t n = cfg.size;
  const std::size_t cols = x.cols();
  TransformedTensor out{x, cols % n};
  std::vector<double> seg(n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    float* row = out.tensor.data.data() + r * cols;
    for (std::size_t c0 = 0; c0 + n <= cols; c0 += n) {
      for (std::size_t i = 0; i < n; ++i) seg[i] = row[c0 + i];
      const std::vector<double> y = kInverse ? rht_inverse(seg, cfg) : rht_forward(seg, cfg);
      for (std::size_t i = 0; i < n; ++i) row[c0 + i] = static_cast<float>(y[i]);
    }
  }
  return out;
}

}  // namespace

HadamardConfig HadamardConfig::make(std::size_t size, uint64_t seed) {
  check_size(size);
  std::mt19937_64 gen(seed);
  HadamardConfig cfg{size, {}};
  cfg.signs.reserve(size);
  for (std::size_t i = 0; i < size; ++i) cfg.signs.push_back((gen() >> 63) ? -1 : 1);
  return cfg;
}

HadamardConfig HadamardConfig::identity_signs(std::size_t size) {
  check_size(size);
  return {size, std::vector<int8_t>(size, 1)};
}

void fwht(std::span<double> v) {
  check_size(v.size());
  for (std::size_t h = 1; h < v.size(); h <<= 1) {
    for (std::size_t i = 0; i < v.size(); i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
}

std::vector<double> rht_forward(std::span<const double> x, const HadamardConfig& cfg) {
  check_input(x.size(), cfg);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = cfg.signs[i] * x[i];
  fwht(y);
  const double norm = 1.0 / std::sqrt(static_cast<double>(cfg.size));
  for (double& v : y) v *= norm;
  return y;
}

std::vector<double> rht_inverse(std::span<const double> y, const HadamardConfig& cfg) {
  check_input(y.size(), cfg);
  std::vector<double> x(y.begin(), y.end());
  fwht(x);
  const double norm = 1.0 / std::sqrt(static_cast<double>(cfg.size));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= norm * cfg.signs[i];
  return x;
}

TransformedTensor rht_rows(const Tensor& x, const HadamardConfig& cfg) {
  return apply_rows<false>(x, cfg);
}

TransformedTensor rht_rows_inverse(const Tensor& y, const HadamardConfig& cfg) {
  return apply_rows<true>(y, cfg);
}

}  // namespace absd
