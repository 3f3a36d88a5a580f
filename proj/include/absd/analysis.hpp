// SPDX-License-Identifier: Apache-2.0
//
// Experiment runners: Gaussian MSE, closed-form dynamic range, per-channel
// error curves, stochastic-rounding bias, INT-selection rates and a MAC
// versus float64 verification sweep. CSV writers emit one header line.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absd/formats.hpp"
#include "absd/quantizer.hpp"
#include "absd/tensor.hpp"
#include "absd/transform.hpp"

namespace absd {

inline constexpr std::size_t kMseBatch = 1 << 16;

struct MseReport {
  std::string format;
  std::size_t n_samples = 0;
  double mse = 0.0;
  double std_error = 0.0;
  uint64_t seed = 0;
};

/// Standard-normal samples in batches of kMseBatch, each batch its own tensor
/// (and tensor scale), round-to-nearest. The sample stream depends only on
/// the seed, so every format sees the same data.
MseReport mse_gaussian(const FormatSpec& spec, std::size_t n_samples, uint64_t seed,
                       unsigned threads = 1);

struct DynamicRange {
  double max = 0.0;
  double min = 0.0;
  double relative = 0.0;  // (max/min) / (NVFP4 max/min); +inf for MX formats
};

DynamicRange dynamic_range(const FormatSpec& spec, ScaleVariant variant);
DynamicRange dynamic_range(const FormatSpec& spec);

struct ChannelMse {
  std::vector<std::string> formats;
  std::vector<std::vector<double>> per_channel;  // [format][row], row order

  /// Every curve sorted independently by increasing error.
  std::vector<std::vector<double>> sorted() const;
};

/// Rank-2 input; one MSE per row for each format.
ChannelMse channel_mse(const Tensor& x, std::span<const FormatSpec* const> specs,
                       unsigned threads = 1);

struct BiasCurve {
  std::vector<double> values;      // originals, sorted ascending
  std::vector<double> mean_error;  // mean(dequantized - original)
  std::vector<double> std_error;
  std::vector<double> block_max;   // max |x| of each value's block
  std::size_t trials = 0;
};

/// Repeats stochastic quantization of the whole tensor `trials` times, each
/// with its own substream of `seed`.
BiasCurve sr_bias(const Tensor& x, const FormatSpec& spec, std::size_t trials, uint64_t seed,
                  double scale_unbias = 16.0 / 17.0, unsigned threads = 1);

struct TopDecileBias {
  std::size_t count = 0;
  /// Mean of sign(x) * bias / block_max over values with |x| >= 0.9 block_max.
  double mean_relative = 0.0;
  double max_relative = 0.0;
  double min_relative = 0.0;
};

TopDecileBias top_decile_bias(const BiasCurve& curve);

/// Fraction of blocks quantized on the integer path, optionally after a
/// row-wise random Hadamard transform. Throws for non-adaptive formats.
double int_selection_rate(const Tensor& x, const FormatSpec& spec,
                          const std::optional<HadamardConfig>& pre_transform = std::nullopt);

struct MacVerifyReport {
  std::size_t blocks = 0;
  std::size_t checked = 0;           // blocks passing the cancellation filter
  std::size_t relative_failures = 0; // rel err > 1e-3 among checked
  /// |mac - oracle| > 16 ulp32(m), m the largest scaled product or running
  /// partial sum of the block.
  std::size_t bound_failures = 0;
  std::size_t fp_only_blocks = 0;
  std::size_t fp_only_mismatches = 0;
  std::size_t int_blocks = 0;        // operand blocks decoded on the INT path
  double max_relative_error = 0.0;
  // |mac - oracle| / ulp32(m): maximum and quantiles.
  double max_ulp_ratio = 0.0;
  double ulp_ratio_p50 = 0.0;
  double ulp_ratio_p99 = 0.0;
  double ulp_ratio_p999 = 0.0;
  /// Same ratio against the largest single exact product instead of m.
  double max_ulp_ratio_product = 0.0;
  bool product_table_exact = false;

  bool passed() const {
    return relative_failures == 0 && bound_failures == 0 && fp_only_mismatches == 0 &&
           product_table_exact;
  }
};

/// True when every binary16 product of two decoded 4-bit operands (FP or INT
/// on either side) equals the exact real product.
bool mac_product_table_exact();

/// Random IF4 blocks (quantized Gaussian, uniform and outlier data) through
/// mac_if4 versus oracle_dot, plus mac_if4 versus mac_nvfp4 on FP-only pairs.
MacVerifyReport mac_verify(std::size_t n_blocks, uint64_t seed);

// CSV writers.
std::string mse_csv(std::span<const MseReport> reports);
std::string range_csv(std::span<const FormatSpec* const> specs);
std::string channel_csv(const ChannelMse& table);
std::string bias_csv(const BiasCurve& curve);

}  // namespace absd
