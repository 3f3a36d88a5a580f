// SPDX-License-Identifier: Apache-2.0
//
// absd: quantize/dequantize tensors in block-scaled formats and run the
// analysis experiments. Analysis commands write CSV (stdout or --output);
// the effective configuration is echoed to stderr as a '# absd ...' line.

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "absd/analysis.hpp"
#include "absd/container.hpp"
#include "absd/formats.hpp"
#include "absd/mac.hpp"
#include "absd/quantizer.hpp"
#include "absd/transform.hpp"

namespace {

using namespace absd;

struct Config {
  std::string input;
  std::string output;
  std::string shape;
  std::string format = "IF4";
  std::vector<std::string> formats;
  std::optional<uint64_t> seed;
  std::string rounding = "nearest";
  bool four_six = false;
  std::size_t hadamard = 0;
  double scale_unbias = 1.0;
  std::size_t samples = 10'000'000;
  std::size_t trials = 1000;
  std::size_t blocks = 100'000;
  unsigned threads = 1;
};

unsigned default_threads() {
  if (const char* env = std::getenv("ABSD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

void emit(const Config& cfg, const std::string& text) {
  if (cfg.output.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    write_file_atomic(cfg.output, std::span(reinterpret_cast<const uint8_t*>(text.data()),
                                            text.size()));
  }
}

void echo(const std::string& cmd, const std::vector<std::string>& kv) {
  fmt::print(stderr, "# absd {} {}\n", cmd, fmt::join(kv, " "));
}

std::string seed_text(const Config& cfg) {
  return cfg.seed ? std::to_string(*cfg.seed) : "none";
}

uint64_t require_seed(const Config& cfg, const char* cmd) {
  if (!cfg.seed) throw std::invalid_argument(fmt::format("{} requires --seed", cmd));
  return *cfg.seed;
}

const FormatSpec& resolve_format(const std::string& name, bool four_six) {
  const FormatSpec& spec = builtin_format(name);
  if (!four_six || spec.four_six()) return spec;
  if (spec.selection != Selection::kNone || !spec.float_book ||
      spec.float_book->name != "E2M1" || spec.mx()) {
    throw std::invalid_argument(fmt::format("--four-six applies to NVFP4 formats, not {}", name));
  }
  return builtin_format(name + "-46");
}

std::vector<const FormatSpec*> resolve_formats(const std::vector<std::string>& names) {
  std::vector<const FormatSpec*> out;
  for (const auto& n : names) out.push_back(&builtin_format(n));
  return out;
}

Tensor load_tensor(const Config& cfg) {
  return read_raw_f32(read_file(cfg.input), parse_shape(cfg.shape));
}

int cmd_quantize(const Config& cfg) {
  const FormatSpec& spec = resolve_format(cfg.format, cfg.four_six);
  QuantizeOptions opts;
  opts.rounding = cfg.rounding == "stochastic" ? Rounding::kStochastic : Rounding::kNearestEven;
  opts.scale_unbias = cfg.scale_unbias;
  opts.threads = cfg.threads;
  if (opts.rounding == Rounding::kStochastic || cfg.hadamard) {
    opts.seed = require_seed(cfg, "stochastic rounding or --hadamard");
  }
  echo("quantize", {"format=" + spec.name, "shape=" + cfg.shape, "rounding=" + cfg.rounding,
                    "seed=" + seed_text(cfg), fmt::format("scale_unbias={}", cfg.scale_unbias),
                    fmt::format("hadamard={}", cfg.hadamard)});

  Tensor x = load_tensor(cfg);
  std::size_t tail = 0;
  if (cfg.hadamard) {
    auto t = rht_rows(x, HadamardConfig::make(cfg.hadamard, opts.seed));
    x = std::move(t.tensor);
    tail = t.untransformed_tail;
  }
  QuantizeStats stats;
  const QuantizedTensor q = quantize(x, spec, opts, &stats);
  write_file_atomic(cfg.output, write_absd(q));
  std::string line = fmt::format("format={} alpha={} blocks={} mse={} int_rate={}", spec.name,
                                 q.alpha, stats.blocks, stats.mse(), stats.int_rate());
  if (cfg.hadamard) line += fmt::format(" hadamard_untransformed_tail={}", tail);
  fmt::print("{}\n", line);
  return 0;
}

int cmd_dequantize(const Config& cfg) {
  echo("dequantize", {"input=" + cfg.input, "output=" + cfg.output});
  const QuantizedTensor q = read_absd(read_file(cfg.input));
  const Tensor t = dequantize(q);
  write_file_atomic(cfg.output, write_raw_f32(t.data));
  fmt::print("format={} shape={}\n", q.spec().name, fmt::join(q.shape, ","));
  return 0;
}

int cmd_mse(const Config& cfg) {
  const uint64_t seed = require_seed(cfg, "mse-gaussian");
  echo("mse-gaussian", {fmt::format("formats={}", fmt::join(cfg.formats, ",")),
                        fmt::format("samples={}", cfg.samples), "seed=" + seed_text(cfg)});
  std::vector<MseReport> reports;
  for (const FormatSpec* f : resolve_formats(cfg.formats)) {
    reports.push_back(mse_gaussian(*f, cfg.samples, seed, cfg.threads));
  }
  emit(cfg, mse_csv(reports));
  return 0;
}

int cmd_range(const Config& cfg) {
  echo("range", {fmt::format("formats={}", fmt::join(cfg.formats, ","))});
  emit(cfg, range_csv(resolve_formats(cfg.formats)));
  return 0;
}

int cmd_bias(const Config& cfg) {
  const uint64_t seed = require_seed(cfg, "bias");
  const FormatSpec& spec = resolve_format(cfg.format, cfg.four_six);
  echo("bias", {"format=" + spec.name, "shape=" + cfg.shape,
                fmt::format("trials={}", cfg.trials), "seed=" + seed_text(cfg),
                fmt::format("scale_unbias={}", cfg.scale_unbias)});
  const BiasCurve curve =
      sr_bias(load_tensor(cfg), spec, cfg.trials, seed, cfg.scale_unbias, cfg.threads);
  emit(cfg, bias_csv(curve));
  return 0;
}

int cmd_channel(const Config& cfg) {
  echo("channel-mse", {"shape=" + cfg.shape,
                       fmt::format("formats={}", fmt::join(cfg.formats, ","))});
  const auto specs = resolve_formats(cfg.formats);
  emit(cfg, channel_csv(channel_mse(load_tensor(cfg), specs, cfg.threads)));
  return 0;
}

int cmd_mac_verify(const Config& cfg) {
  const uint64_t seed = require_seed(cfg, "mac-verify");
  echo("mac-verify", {fmt::format("blocks={}", cfg.blocks), "seed=" + seed_text(cfg)});
  const MacVerifyReport r = mac_verify(cfg.blocks, seed);
  fmt::print("blocks={} checked={} relative_failures={} max_relative_error={:.3e}\n", r.blocks,
             r.checked, r.relative_failures, r.max_relative_error);
  fmt::print("bound_failures={} max_ulp_ratio={:.3f} p50={:.3f} p99={:.3f} p999={:.3f}\n",
             r.bound_failures, r.max_ulp_ratio, r.ulp_ratio_p50, r.ulp_ratio_p99,
             r.ulp_ratio_p999);
  fmt::print("max_ulp_ratio_vs_largest_product={:.3f}\n", r.max_ulp_ratio_product);
  fmt::print("fp_only_blocks={} fp_only_mismatches={} int_operand_blocks={}\n",
             r.fp_only_blocks, r.fp_only_mismatches, r.int_blocks);
  fmt::print("product_table_exact={}\n", r.product_table_exact);
  fmt::print("{}\n", r.passed() ? "PASS" : "FAIL");
  return r.passed() ? 0 : 1;
}

int cmd_codebooks(const Config& cfg) {
  emit(cfg, codebook_reference());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive block-scaled data types: quantization and analysis"};
  app.require_subcommand(1);
  Config cfg;
  cfg.threads = default_threads();
  const std::vector<std::string> default_formats = {"MXFP4", "NVFP4", "NVFP4-46", "NVINT4", "IF4"};

  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", cfg.threads, "Worker threads (default $ABSD_THREADS or 1)");
  };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", cfg.seed, "RNG seed"); };

  auto* quant = app.add_subcommand("quantize", "Quantize a raw float32 file to ABSD");
  quant->add_option("--input,-i", cfg.input, "Raw little-endian float32 input")->required();
  quant->add_option("--shape", cfg.shape, "Comma-separated dims")->required();
  quant->add_option("--format,-f", cfg.format, "Format name")->required();
  quant->add_option("--output,-o", cfg.output, "ABSD output path")->required();
  quant->add_option("--rounding", cfg.rounding)->check(CLI::IsMember({"nearest", "stochastic"}));
  quant->add_flag("--four-six", cfg.four_six, "Use the 4/6 selection for NVFP4 formats");
  quant->add_option("--hadamard", cfg.hadamard, "Random Hadamard transform size (0 = off)");
  quant->add_option("--scale-unbias", cfg.scale_unbias, "Block-scale headroom in (0, 1]");
  add_seed(quant);
  add_threads(quant);

  auto* deq = app.add_subcommand("dequantize", "Dequantize an ABSD file to raw float32");
  deq->add_option("--input,-i", cfg.input)->required();
  deq->add_option("--output,-o", cfg.output)->required();

  auto* mse = app.add_subcommand("mse-gaussian", "MSE over N(0,1) samples (CSV)");
  mse->add_option("--formats", cfg.formats)->delimiter(',')->default_str(
      fmt::format("{}", fmt::join(default_formats, ",")));
  mse->add_option("--samples,-n", cfg.samples);
  mse->add_option("--output,-o", cfg.output);
  add_seed(mse);
  add_threads(mse);

  auto* range = app.add_subcommand("range", "Closed-form dynamic range (CSV)");
  range->add_option("--formats", cfg.formats)->delimiter(',');
  range->add_option("--output,-o", cfg.output);

  auto* bias = app.add_subcommand("bias", "Stochastic-rounding bias per value (CSV)");
  bias->add_option("--input,-i", cfg.input)->required();
  bias->add_option("--shape", cfg.shape)->required();
  bias->add_option("--format,-f", cfg.format)->required();
  bias->add_option("--trials", cfg.trials);
  bias->add_option("--scale-unbias", cfg.scale_unbias);
  bias->add_flag("--four-six", cfg.four_six);
  bias->add_option("--output,-o", cfg.output);
  add_seed(bias);
  add_threads(bias);

  auto* chan = app.add_subcommand("channel-mse", "Per-channel MSE curves (CSV)");
  chan->add_option("--input,-i", cfg.input)->required();
  chan->add_option("--shape", cfg.shape)->required();
  chan->add_option("--formats", cfg.formats)->delimiter(',');
  chan->add_option("--output,-o", cfg.output);
  add_threads(chan);

  auto* mac = app.add_subcommand("mac-verify", "Check the MAC model against float64");
  mac->add_option("--blocks,-n", cfg.blocks);
  add_seed(mac);

  auto* books = app.add_subcommand("codebooks", "Print every codebook bit-for-bit");
  books->add_option("--output,-o", cfg.output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  // Bias uses 16/17 headroom unless overridden.
  if (bias->parsed() && bias->count("--scale-unbias") == 0) cfg.scale_unbias = 16.0 / 17.0;
  if (cfg.formats.empty()) {
    cfg.formats = default_formats;
    if (chan->parsed()) cfg.formats = {"NVFP4", "NVFP4-46", "NVINT4", "IF4"};
    if (range->parsed()) {
      cfg.formats.assign(builtin_format_names().begin(), builtin_format_names().end());
    }
  }

  try {
    if (quant->parsed()) return cmd_quantize(cfg);
    if (deq->parsed()) return cmd_dequantize(cfg);
    if (mse->parsed()) return cmd_mse(cfg);
    if (range->parsed()) return cmd_range(cfg);
    if (bias->parsed()) return cmd_bias(cfg);
    if (chan->parsed()) return cmd_channel(cfg);
    if (mac->parsed()) return cmd_mac_verify(cfg);
    if (books->parsed()) return cmd_codebooks(cfg);
  } catch (const CorruptData& e) {
    fmt::print(stderr, "error: corrupt-data: {}\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: invalid-argument: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: runtime: {}\n", e.what());
    return 1;
  }
  return 1;
}
