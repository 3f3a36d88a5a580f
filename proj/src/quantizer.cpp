// SPDX-License-Identifier: Apache-2.0

#include "absd/quantizer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "absd/rng.hpp"

namespace absd {

namespace {

constexpr double kFourSixScaleCeiling = 256.0;
constexpr double kFourSixAltMax = 4.0;

double abs_max(std::span<const float> v) {
  double m = 0.0;
  for (float x : v) m = std::max(m, static_cast<double>(std::fabs(x)));
  return m;
}

// code_value * delta * alpha * num / den with one final rounding; the
// numerator is exact in double for every builtin format.
double scaled_value(double code_value, double delta, float alpha, const Ratio* align) {
  const double base = code_value * delta * static_cast<double>(alpha);
  if (align == nullptr) return base;
  return base * static_cast<double>(align->num) / static_cast<double>(align->den);
}

struct Candidate {
  std::array<uint8_t, 32> codes{};
  double err = 0.0;
};

// One quantization of the block at a fixed decoded scale. `align` selects the
// integer path: values are pre-scaled by den/num before rounding.
Candidate evaluate(std::span<const float> vals, double delta, float alpha,
                   const Codebook& book, const Ratio* align, Rounding mode,
                   SplitMix64* rng) {
  Candidate c;
  if (delta == 0.0) {
    for (float v : vals) c.err += static_cast<double>(v) * v;
    return c;
  }
  double denom = delta * static_cast<double>(alpha);
  double numer_mult = 1.0;
  if (align != nullptr) {
    denom *= static_cast<double>(align->num);
    numer_mult = static_cast<double>(align->den);
  }
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double v = vals[i];
    const double xbar = std::clamp(v * numer_mult / denom, -book.max(), book.max());
    const uint8_t code = round_to_codebook(xbar, book, mode, rng);
    c.codes[i] = code;
    const double d = scaled_value(book.decode(code), delta, alpha, align) - v;
    c.err += d * d;
  }
  return c;
}

BlockQuantResult finish(const Candidate& c, std::size_t n) {
  BlockQuantResult r;
  r.codes.assign(c.codes.begin(), c.codes.begin() + static_cast<std::ptrdiff_t>(n));
  r.sq_error = c.err;
  return r;
}

int mx_element_exponent(const FormatSpec& spec) {
  int exp = 0;
  std::frexp(spec.elem_max, &exp);
  return exp - 1;  // floor(log2(elem_max))
}

}  // namespace

float tensor_scale(std::span<const float> values, const FormatSpec& spec,
                   ScaleVariant variant) {
  if (values.empty()) throw std::invalid_argument("tensor_scale of an empty tensor");
  const double amax = abs_max(values);
  if (spec.mx() || amax == 0.0) return 1.0f;
  const double ceiling =
      variant == ScaleVariant::kFourSix ? kFourSixScaleCeiling : spec.scale_max;
  return static_cast<float>(amax / (spec.elem_max * ceiling));
}

float tensor_scale(std::span<const float> values, const FormatSpec& spec) {
  return tensor_scale(values, spec,
                      spec.four_six() ? ScaleVariant::kFourSix : ScaleVariant::kStandard);
}

BlockQuantResult quantize_block(std::span<const float> vals, float alpha,
                                const FormatSpec& spec, Rounding mode,
                                double scale_unbias, SplitMix64* rng) {
  const std::size_t n = static_cast<std::size_t>(spec.block_size);
  if (vals.size() != n) {
    throw std::invalid_argument(
        fmt::format("{} blocks hold {} values, got {}", spec.name, n, vals.size()));
  }
  if (!(scale_unbias > 0.0 && scale_unbias <= 1.0)) {
    throw std::invalid_argument("scale_unbias must lie in (0, 1]");
  }
  if (!(alpha > 0.0f) || !std::isfinite(alpha)) {
    throw std::invalid_argument("tensor scale must be positive and finite");
  }
  if (mode == Rounding::kStochastic && rng == nullptr) {
    throw std::invalid_argument("stochastic rounding requires an RNG");
  }
  const double inf = std::numeric_limits<double>::infinity();
  const double amax = abs_max(vals);

  if (spec.mx()) {
    BlockQuantResult r;
    if (amax == 0.0) {
      r.codes.assign(n, 0);
      r.candidate_errors = {0.0, inf};
      return r;
    }
    int exp = 0;
    std::frexp(amax / static_cast<double>(alpha) / scale_unbias, &exp);
    const int e = std::clamp(exp - 1 - mx_element_exponent(spec), -127, 127);
    const uint8_t byte = static_cast<uint8_t>(e + 127);
    const double delta = std::ldexp(1.0, e);
    r = finish(evaluate(vals, delta, alpha, spec.primary(), nullptr, mode, rng), n);
    r.scale_byte = byte;
    r.scale = delta;
    r.candidate_errors = {r.sq_error, inf};
    return r;
  }

  auto block_scale = [&](double elem_max) {
    const double target = amax / (static_cast<double>(alpha) * elem_max) / scale_unbias;
    const uint8_t byte = encode_scale(target, spec.scale);
    return std::pair{byte, decode_scale(byte, spec.scale).magnitude};
  };

  const auto [byte, delta] = block_scale(spec.elem_max);
  const Candidate primary = evaluate(vals, delta, alpha, spec.primary(), nullptr, mode, rng);

  if (spec.selection == Selection::kNone) {
    BlockQuantResult r = finish(primary, n);
    r.scale_byte = delta == 0.0 ? 0 : byte;
    r.scale = delta;
    r.candidate_errors = {primary.err, inf};
    return r;
  }

  if (spec.four_six()) {
    const auto [byte4, delta4] = block_scale(kFourSixAltMax);
    const Candidate alt = evaluate(vals, delta4, alpha, spec.primary(), nullptr, mode, rng);
    const bool pick_alt = alt.err < primary.err;
    BlockQuantResult r = finish(pick_alt ? alt : primary, n);
    r.chose_int = pick_alt;
    r.scale = pick_alt ? delta4 : delta;
    r.scale_byte = r.scale == 0.0 ? 0 : (pick_alt ? byte4 : byte);
    r.candidate_errors = {primary.err, alt.err};
    return r;
  }

  // Adaptive: float vs aligned integer at the same decoded scale.
  if (delta == 0.0) {
    BlockQuantResult r = finish(primary, n);
    r.candidate_errors = {primary.err, primary.err};
    return r;
  }
  const Candidate integer =
      evaluate(vals, delta, alpha, *spec.int_book, &spec.align_descale, mode, rng);
  const bool pick_int = integer.err < primary.err;
  BlockQuantResult r = finish(pick_int ? integer : primary, n);
  r.chose_int = pick_int;
  r.scale = delta;
  r.scale_byte = encode_scale(delta, spec.scale, pick_int);
  r.candidate_errors = {primary.err, integer.err};
  return r;
}

double dequantize_element(uint8_t code, const FormatSpec& spec, uint8_t scale_byte,
                          float alpha) {
  DecodedScale ds;
  try {
    ds = decode_scale(scale_byte, spec.scale);
  } catch (const std::invalid_argument& e) {
    throw CorruptData(e.what());
  }
  if (ds.sign_bit && !spec.adaptive()) {
    throw CorruptData(fmt::format("scale byte 0x{:02X} has its sign bit set but {} is not "
                                  "an adaptive format",
                                  scale_byte, spec.name));
  }
  if (ds.sign_bit) {
    return scaled_value(spec.int_book->decode(code), ds.magnitude, alpha,
                        &spec.align_descale);
  }
  return scaled_value(spec.primary().decode(code), ds.magnitude, alpha, nullptr);
}

std::vector<double> dequantize_block(std::span<const uint8_t> codes, uint8_t scale_byte,
                                     float alpha, const FormatSpec& spec) {
  std::vector<double> out;
  out.reserve(codes.size());
  for (uint8_t c : codes) out.push_back(dequantize_element(c, spec, scale_byte, alpha));
  return out;
}

std::size_t QuantizedTensor::rows() const {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
  return r;
}

std::size_t QuantizedTensor::blocks_per_row() const {
  const auto bs = static_cast<std::size_t>(spec().block_size);
  return (cols() + bs - 1) / bs;
}

std::size_t QuantizedTensor::num_codes() const {
  return num_blocks() * static_cast<std::size_t>(spec().block_size);
}

std::size_t QuantizedTensor::code_bytes() const {
  return num_codes() * static_cast<std::size_t>(spec().code_bits()) / 8;
}

uint8_t QuantizedTensor::code(std::size_t row, std::size_t col) const {
  const std::size_t stride = blocks_per_row() * static_cast<std::size_t>(spec().block_size);
  return get_packed(packed_codes, row * stride + col, spec().code_bits());
}

void check_layout(const QuantizedTensor& q) {
  if (q.format_id >= builtin_format_names().size()) {
    throw CorruptData(fmt::format("unknown format id {}", q.format_id));
  }
  try {
    checked_numel(q.shape);
  } catch (const std::invalid_argument& e) {
    throw CorruptData(e.what());
  }
  if (q.scale_bytes.size() != q.num_blocks()) {
    throw CorruptData(fmt::format("expected {} scale bytes, found {}", q.num_blocks(),
                                  q.scale_bytes.size()));
  }
  if (q.packed_codes.size() != q.code_bytes()) {
    throw CorruptData(fmt::format("expected {} code bytes, found {}", q.code_bytes(),
                                  q.packed_codes.size()));
  }
  if (!(q.alpha > 0.0f) || !std::isfinite(q.alpha)) {
    throw CorruptData("tensor scale must be positive and finite");
  }
}

QuantizedTensor quantize(const Tensor& x, const FormatSpec& spec,
                         const QuantizeOptions& opts, QuantizeStats* stats) {
  validate(x);
  for (float v : x.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("tensor contains non-finite values");
  }
  if (!(opts.scale_unbias > 0.0 && opts.scale_unbias <= 1.0)) {
    throw std::invalid_argument("scale_unbias must lie in (0, 1]");
  }

  QuantizedTensor q;
  q.format_id = spec.id;
  q.shape = x.shape;
  q.alpha = opts.alpha ? *opts.alpha : tensor_scale(x.data, spec);
  if (!(q.alpha > 0.0f) || !std::isfinite(q.alpha)) {
    throw std::invalid_argument("tensor scale must be positive and finite");
  }

  const auto bs = static_cast<std::size_t>(spec.block_size);
  const int bits = spec.code_bits();
  const std::size_t cols = x.cols();
  const std::size_t per_row = (cols + bs - 1) / bs;
  const std::size_t nblocks = x.rows() * per_row;
  const std::size_t block_bytes = bs * static_cast<std::size_t>(bits) / 8;
  q.scale_bytes.assign(nblocks, 0);
  q.packed_codes.assign(nblocks * block_bytes, 0);

  std::vector<uint8_t> chose(nblocks, 0);
  std::vector<double> errors(nblocks, 0.0);

  parallel_for(nblocks, opts.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<float> buf(bs);
    for (std::size_t b = begin; b < end; ++b) {
      const std::size_t row = b / per_row;
      const std::size_t c0 = (b % per_row) * bs;
      const std::size_t take = std::min(bs, cols - c0);
      std::fill(buf.begin(), buf.end(), 0.0f);
      const float* src = x.data.data() + row * cols + c0;
      std::copy(src, src + take, buf.begin());

      SplitMix64 rng = SplitMix64::substream(opts.seed, b);
      const BlockQuantResult r =
          quantize_block(buf, q.alpha, spec, opts.rounding, opts.scale_unbias, &rng);
      q.scale_bytes[b] = r.scale_byte;
      std::span<uint8_t> dst(q.packed_codes.data() + b * block_bytes, block_bytes);
      for (std::size_t i = 0; i < bs; ++i) set_packed(dst, i, bits, r.codes[i]);
      chose[b] = r.chose_int;
      errors[b] = r.sq_error;
    }
  });

  if (stats != nullptr) {
    *stats = {};
    stats->blocks = nblocks;
    stats->elements = x.data.size();
    for (std::size_t b = 0; b < nblocks; ++b) {
      stats->int_blocks += chose[b];
      stats->sq_error += errors[b];
    }
    stats->block_errors = std::move(errors);
    stats->block_chose_int = std::move(chose);
  }
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  check_layout(q);
  const FormatSpec& spec = q.spec();
  const auto bs = static_cast<std::size_t>(spec.block_size);
  const std::size_t cols = q.cols();
  const std::size_t per_row = q.blocks_per_row();
  Tensor out(q.shape, std::vector<float>(q.rows() * cols));
  for (std::size_t row = 0; row < q.rows(); ++row) {
    for (std::size_t col = 0; col < cols; ++col) {
      const uint8_t sb = q.scale_bytes[row * per_row + col / bs];
      out.data[row * cols + col] =
          static_cast<float>(dequantize_element(q.code(row, col), spec, sb, q.alpha));
    }
  }
  return out;
}

}  // namespace absd
