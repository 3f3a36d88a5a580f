// SPDX-License-Identifier: Apache-2.0

#include "absd/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "absd/mac.hpp"
#include "absd/rng.hpp"

namespace absd {

namespace {

constexpr double kNvfp4RangeRatio = (6.0 * 448.0) / (0.5 * 0x1p-9);

const char* scale_name(const FormatSpec& f) {
  switch (f.scale.kind) {
    case ScaleKind::kUE8M0:
      return "UE8M0";
    case ScaleKind::kUE4M3:
      return "UE4M3";
    default:
      return "E4M3";
  }
}

}  // namespace

MseReport mse_gaussian(const FormatSpec& spec, std::size_t n_samples, uint64_t seed,
                       unsigned threads) {
  const auto bs = static_cast<std::size_t>(spec.block_size);
  if (n_samples == 0 || n_samples % bs != 0) {
    throw std::invalid_argument(fmt::format(
        "sample count {} must be a positive multiple of the block size {}", n_samples, bs));
  }
  const std::size_t batches = (n_samples + kMseBatch - 1) / kMseBatch;
  // Per batch: sum and sum of squares of per-block mean squared errors.
  std::vector<double> sum(batches, 0.0);
  std::vector<double> sum_sq(batches, 0.0);

  parallel_for(batches, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const std::size_t size = std::min(kMseBatch, n_samples - b * kMseBatch);
      std::mt19937_64 gen(SplitMix64::substream(seed, b)());
      std::normal_distribution<double> normal;
      Tensor x({1, size}, std::vector<float>(size));
      for (float& v : x.data) v = static_cast<float>(normal(gen));
      QuantizeStats stats;
      quantize(x, spec, {}, &stats);
      for (double e : stats.block_errors) {
        const double m = e / static_cast<double>(bs);
        sum[b] += m;
        sum_sq[b] += m * m;
      }
    }
  });

  const double k = static_cast<double>(n_samples / bs);
  const double total = std::accumulate(sum.begin(), sum.end(), 0.0);
  const double total_sq = std::accumulate(sum_sq.begin(), sum_sq.end(), 0.0);
  const double mean = total / k;
  const double var = k > 1 ? std::max(0.0, (total_sq - k * mean * mean) / (k - 1)) : 0.0;
  return {spec.name, n_samples, mean, std::sqrt(var / k), seed};
}

DynamicRange dynamic_range(const FormatSpec& spec, ScaleVariant variant) {
  DynamicRange r;
  if (spec.mx()) {
    r.max = spec.elem_max * spec.scale.max_value;
    r.min = spec.elem_min_nonzero() * spec.scale.min_subnormal;
    r.relative = std::numeric_limits<double>::infinity();
    return r;
  }
  const double ceiling = variant == ScaleVariant::kFourSix ? 256.0 : spec.scale_max;
  r.max = spec.elem_max * ceiling;
  r.min = spec.elem_min_nonzero() * spec.scale.min_subnormal;
  r.relative = (r.max / r.min) / kNvfp4RangeRatio;
  return r;
}

DynamicRange dynamic_range(const FormatSpec& spec) {
  return dynamic_range(spec,
                       spec.four_six() ? ScaleVariant::kFourSix : ScaleVariant::kStandard);
}

std::vector<std::vector<double>> ChannelMse::sorted() const {
  auto out = per_channel;
  for (auto& curve : out) std::sort(curve.begin(), curve.end());
  return out;
}

ChannelMse channel_mse(const Tensor& x, std::span<const FormatSpec* const> specs,
                       unsigned threads) {
  validate(x);
  if (x.shape.size() != 2) {
    throw std::invalid_argument(
        fmt::format("channel_mse needs a rank-2 tensor, got rank {}", x.shape.size()));
  }
  ChannelMse table;
  const std::size_t rows = x.shape[0];
  const std::size_t cols = x.shape[1];
  for (const FormatSpec* spec : specs) {
    QuantizeOptions opts;
    opts.threads = threads;
    QuantizeStats stats;
    quantize(x, *spec, opts, &stats);
    const std::size_t per_row = stats.block_errors.size() / rows;
    std::vector<double> curve(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t b = 0; b < per_row; ++b) curve[r] += stats.block_errors[r * per_row + b];
      curve[r] /= static_cast<double>(cols);
    }
    table.formats.push_back(spec->name);
    table.per_channel.push_back(std::move(curve));
  }
  return table;
}

BiasCurve sr_bias(const Tensor& x, const FormatSpec& spec, std::size_t trials, uint64_t seed,
                  double scale_unbias, unsigned threads) {
  validate(x);
  if (trials == 0) throw std::invalid_argument("sr_bias needs at least one trial");
  const std::size_t n = x.data.size();
  std::vector<double> sum(n, 0.0);
  std::vector<double> sum_sq(n, 0.0);
  QuantizeOptions opts;
  opts.rounding = Rounding::kStochastic;
  opts.scale_unbias = scale_unbias;
  opts.threads = threads;
  for (std::size_t t = 0; t < trials; ++t) {
    opts.seed = SplitMix64::substream(seed, t)();
    const Tensor d = dequantize(quantize(x, spec, opts));
    for (std::size_t i = 0; i < n; ++i) {
      const double e = static_cast<double>(d.data[i]) - static_cast<double>(x.data[i]);
      sum[i] += e;
      sum_sq[i] += e * e;
    }
  }

  const auto bs = static_cast<std::size_t>(spec.block_size);
  const std::size_t cols = x.cols();
  std::vector<double> bmax(n, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c0 = 0; c0 < cols; c0 += bs) {
      const std::size_t c1 = std::min(cols, c0 + bs);
      double m = 0.0;
      for (std::size_t c = c0; c < c1; ++c) m = std::max(m, std::fabs(double{x.data[r * cols + c]}));
      for (std::size_t c = c0; c < c1; ++c) bmax[r * cols + c] = m;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x.data[a] < x.data[b]; });

  const double tn = static_cast<double>(trials);
  BiasCurve curve;
  curve.trials = trials;
  for (std::size_t i : order) {
    const double mean = sum[i] / tn;
    const double var =
        trials > 1 ? std::max(0.0, (sum_sq[i] - tn * mean * mean) / (tn - 1)) : 0.0;
    curve.values.push_back(x.data[i]);
    curve.mean_error.push_back(mean);
    curve.std_error.push_back(std::sqrt(var / tn));
    curve.block_max.push_back(bmax[i]);
  }
  return curve;
}

TopDecileBias top_decile_bias(const BiasCurve& curve) {
  TopDecileBias out;
  out.max_relative = -std::numeric_limits<double>::infinity();
  out.min_relative = std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    const double bm = curve.block_max[i];
    if (bm == 0.0 || std::fabs(curve.values[i]) < 0.9 * bm) continue;
    const double rel = std::copysign(1.0, curve.values[i]) * curve.mean_error[i] / bm;
    total += rel;
    out.max_relative = std::max(out.max_relative, rel);
    out.min_relative = std::min(out.min_relative, rel);
    ++out.count;
  }
  if (out.count) out.mean_relative = total / static_cast<double>(out.count);
  return out;
}

double int_selection_rate(const Tensor& x, const FormatSpec& spec,
                          const std::optional<HadamardConfig>& pre_transform) {
  if (!spec.adaptive()) {
    throw std::invalid_argument(
        fmt::format("{} has no integer path; INT-selection rate is undefined", spec.name));
  }
  QuantizeStats stats;
  if (pre_transform) {
    quantize(rht_rows(x, *pre_transform).tensor, spec, {}, &stats);
  } else {
    quantize(x, spec, {}, &stats);
  }
  return stats.int_rate();
}

bool mac_product_table_exact() {
  const uint8_t one = encode_scale(1.0, ue4m3_scale());
  for (int w_int = 0; w_int < 2; ++w_int) {
    for (int a_int = 0; a_int < 2; ++a_int) {
      const Codebook& wb = w_int ? int4() : fp4_e2m1();
      const Codebook& ab = a_int ? int4() : fp4_e2m1();
      for (unsigned wc = 0; wc < 16; ++wc) {
        for (unsigned ac = 0; ac < 16; ++ac) {
          std::array<uint8_t, kMacWidth> w{};
          std::array<uint8_t, kMacWidth> a{};
          w[0] = static_cast<uint8_t>(wc);
          a[0] = static_cast<uint8_t>(ac);
          const MacResult r = mac_if4(w, a, static_cast<uint8_t>(one | (w_int ? 0x80 : 0)),
                                      static_cast<uint8_t>(one | (a_int ? 0x80 : 0)), 0.0f);
          const double exact = wb.decode(w[0]) * ab.decode(a[0]);
          if (half_to_double(r.trace.products[0]) != exact) return false;
        }
      }
    }
  }
  return true;
}

MacVerifyReport mac_verify(std::size_t n_blocks, uint64_t seed) {
  const FormatSpec& if4 = builtin_format("IF4");
  const FormatSpec& nvfp4 = builtin_format("NVFP4");
  MacVerifyReport rep;
  rep.product_table_exact = mac_product_table_exact();

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::uniform_int_distribution<int> octave(-4, 4);
  std::uniform_int_distribution<std::size_t> slot(0, kMacWidth - 1);

  auto make_values = [&](std::size_t kind) {
    std::vector<float> v(kMacWidth);
    const double s = std::ldexp(1.0, octave(gen));
    for (float& x : v) x = static_cast<float>(s * (kind == 1 ? uniform(gen) : normal(gen)));
    if (kind == 2) v[slot(gen)] = static_cast<float>(s * 8.0 * (uniform(gen) < 0 ? -1 : 1));
    return v;
  };

  std::vector<double> ratios;
  ratios.reserve(n_blocks);
  for (std::size_t k = 0; k < n_blocks; ++k) {
    const auto wv = make_values(k % 3);
    const auto av = make_values((k / 3) % 3);
    const BlockQuantResult wq = quantize_block(wv, 1.0f, if4);
    const BlockQuantResult aq = quantize_block(av, 1.0f, if4);
    std::span<const uint8_t, kMacWidth> wc(wq.codes.data(), kMacWidth);
    std::span<const uint8_t, kMacWidth> ac(aq.codes.data(), kMacWidth);
    rep.int_blocks += wq.chose_int + aq.chose_int;

    const MacResult res = mac_if4(wc, ac, wq.scale_byte, aq.scale_byte, 0.0f);
    const float mac = res.acc;
    const double oracle = oracle_dot(wc, ac, wq.scale_byte, aq.scale_byte, if4);
    double sum_abs = 0.0;
    double max_product = 0.0;
    for (std::size_t i = 0; i < kMacWidth; ++i) {
      const double c = dequantize_element(wc[i], if4, wq.scale_byte, 1.0f) *
                       dequantize_element(ac[i], if4, aq.scale_byte, 1.0f);
      sum_abs += std::fabs(c);
      max_product = std::max(max_product, std::fabs(c));
    }
    // Largest magnitude among the scaled products and the running sums.
    double max_partial = std::fabs(double{res.trace.acc_in});
    float running = res.trace.acc_in;
    for (float p : res.trace.scaled_products) {
      running += p;
      max_partial = std::max({max_partial, std::fabs(double{p}), std::fabs(double{running})});
    }
    ++rep.blocks;
    const double diff = std::fabs(static_cast<double>(mac) - oracle);
    if (max_partial > 0.0) {
      const double ratio = diff / ulp32(max_partial);
      ratios.push_back(ratio);
      rep.max_ulp_ratio = std::max(rep.max_ulp_ratio, ratio);
      rep.max_ulp_ratio_product =
          std::max(rep.max_ulp_ratio_product, diff / ulp32(max_product));
      if (ratio > 16.0) ++rep.bound_failures;
    } else if (diff != 0.0) {
      ++rep.bound_failures;
    }
    if (std::fabs(oracle) > 1e-3 * sum_abs && sum_abs > 0.0) {
      ++rep.checked;
      const double rel = diff / std::fabs(oracle);
      rep.max_relative_error = std::max(rep.max_relative_error, rel);
      if (rel > 1e-3) ++rep.relative_failures;
    }

    // FP-only agreement: natural IF4 pairs with both sign bits clear, plus an
    // NVFP4-quantized pair of the same data.
    auto compare_fp = [&](const BlockQuantResult& w, const BlockQuantResult& a) {
      std::span<const uint8_t, kMacWidth> w16(w.codes.data(), kMacWidth);
      std::span<const uint8_t, kMacWidth> a16(a.codes.data(), kMacWidth);
      const float x = mac_if4(w16, a16, w.scale_byte, a.scale_byte, 0.0f).acc;
      const float y = mac_nvfp4(w16, a16, w.scale_byte, a.scale_byte, 0.0f).acc;
      ++rep.fp_only_blocks;
      if (std::bit_cast<uint32_t>(x) != std::bit_cast<uint32_t>(y)) ++rep.fp_only_mismatches;
    };
    if (!wq.chose_int && !aq.chose_int) compare_fp(wq, aq);
    compare_fp(quantize_block(wv, 1.0f, nvfp4), quantize_block(av, 1.0f, nvfp4));
  }
  if (!ratios.empty()) {
    auto quantile = [&](double q) {
      const auto k = static_cast<std::size_t>(q * static_cast<double>(ratios.size() - 1));
      std::nth_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(k),
                       ratios.end());
      return ratios[k];
    };
    rep.ulp_ratio_p50 = quantile(0.5);
    rep.ulp_ratio_p99 = quantile(0.99);
    rep.ulp_ratio_p999 = quantile(0.999);
  }
  return rep;
}

std::string mse_csv(std::span<const MseReport> reports) {
  std::string out = "format,n_samples,mse,std_error,seed\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{},{},{}\n", r.format, r.n_samples, r.mse, r.std_error, r.seed);
  }
  return out;
}

std::string range_csv(std::span<const FormatSpec* const> specs) {
  std::string out = "format,block_size,scale,max,min,relative,relative_percent\n";
  for (const FormatSpec* f : specs) {
    const DynamicRange r = dynamic_range(*f);
    const std::string pct =
        std::isinf(r.relative) ? "inf" : fmt::format("{:.1f}", 100.0 * r.relative);
    out += fmt::format("{},{},{},{},{},{},{}\n", f->name, f->block_size, scale_name(*f), r.max,
                       r.min, r.relative, pct);
  }
  return out;
}

std::string channel_csv(const ChannelMse& table) {
  std::string out = "rank";
  for (const auto& name : table.formats) out += "," + name;
  out += "\n";
  const auto sorted = table.sorted();
  const std::size_t rows = sorted.empty() ? 0 : sorted.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    out += fmt::format("{}", r);
    for (const auto& curve : sorted) out += fmt::format(",{}", curve[r]);
    out += "\n";
  }
  return out;
}

std::string bias_csv(const BiasCurve& curve) {
  std::string out = "value,mean_error,std_error,block_max,trials\n";
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    out += fmt::format("{},{},{},{},{}\n", curve.values[i], curve.mean_error[i],
                       curve.std_error[i], curve.block_max[i], curve.trials);
  }
  return out;
}

}  // namespace absd
