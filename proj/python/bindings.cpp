// SPDX-License-Identifier: Apache-2.0
//
// Python bindings: format registry, tensor quantization and the ABSD
// container, the Hadamard transform, the MAC model and the analysis runners.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "absd/analysis.hpp"
#include "absd/container.hpp"
#include "absd/formats.hpp"
#include "absd/mac.hpp"
#include "absd/quantizer.hpp"
#include "absd/transform.hpp"

namespace py = pybind11;
using namespace absd;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F32Array& a) {
  Tensor t;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) t.shape.push_back(static_cast<std::size_t>(a.shape(i)));
  t.data.assign(a.data(), a.data() + a.size());
  return t;
}

F32Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  F32Array out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

Rounding parse_rounding(const std::string& s) {
  if (s == "nearest") return Rounding::kNearestEven;
  if (s == "stochastic") return Rounding::kStochastic;
  throw std::invalid_argument("rounding must be 'nearest' or 'stochastic', got '" + s + "'");
}

std::array<uint8_t, kMacWidth> block_codes(const std::vector<uint8_t>& v) {
  if (v.size() != kMacWidth) {
    throw std::invalid_argument("MAC blocks hold 16 codes, got " + std::to_string(v.size()));
  }
  std::array<uint8_t, kMacWidth> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

py::dict trace_dict(const MacTrace& t) {
  py::dict d;
  d["decoded_w"] = std::vector<int16_t>(t.decoded_w.begin(), t.decoded_w.end());
  d["decoded_a"] = std::vector<int16_t>(t.decoded_a.begin(), t.decoded_a.end());
  d["w_int"] = t.w_int;
  d["a_int"] = t.a_int;
  std::vector<uint16_t> products;
  for (Half h : t.products) products.push_back(h.bits);
  d["products"] = products;
  d["unified_scale"] = t.unified_scale;
  d["alignment"] = t.alignment;
  d["aligned_scale"] = t.aligned_scale;
  d["scaled_products"] = std::vector<float>(t.scaled_products.begin(), t.scaled_products.end());
  d["acc_in"] = t.acc_in;
  d["accumulator"] = t.accumulator;
  return d;
}

py::tuple mac_call(bool if4, const std::vector<uint8_t>& w, const std::vector<uint8_t>& a,
                   uint8_t ws, uint8_t as, float acc) {
  const auto wc = block_codes(w);
  const auto ac = block_codes(a);
  const MacResult r = if4 ? mac_if4(wc, ac, ws, as, acc) : mac_nvfp4(wc, ac, ws, as, acc);
  return py::make_tuple(r.acc, trace_dict(r.trace));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adaptive block-scaled data types: quantization, container, MAC model, analysis.";

  py::register_exception<CorruptData>(m, "CorruptData", PyExc_ValueError);

  py::class_<FormatSpec>(m, "FormatSpec")
      .def_readonly("name", &FormatSpec::name)
      .def_readonly("id", &FormatSpec::id)
      .def_readonly("block_size", &FormatSpec::block_size)
      .def_readonly("elem_max", &FormatSpec::elem_max)
      .def_readonly("scale_max", &FormatSpec::scale_max)
      .def_property_readonly("adaptive", &FormatSpec::adaptive)
      .def_property_readonly("four_six", &FormatSpec::four_six)
      .def_property_readonly("mx", &FormatSpec::mx)
      .def_property_readonly("code_bits", &FormatSpec::code_bits)
      .def_property_readonly("align_descale",
                             [](const FormatSpec& f) {
                               return py::make_tuple(f.align_descale.num, f.align_descale.den);
                             })
      .def("__repr__", [](const FormatSpec& f) { return "<FormatSpec " + f.name + ">"; });

  m.def("format_names", [] {
    std::vector<std::string> out;
    for (auto n : builtin_format_names()) out.emplace_back(n);
    return out;
  });
  m.def("get_format", [](const std::string& name) { return builtin_format(name); },
        py::arg("name"));
  m.def("codebook_reference", &codebook_reference);

  m.def("encode_scale",
        [](double v, const std::string& kind, bool indicator) {
          const ScaleType& st = kind == "E4M3"    ? e4m3_scale()
                                : kind == "UE4M3" ? ue4m3_scale()
                                : kind == "UE8M0" ? ue8m0_scale()
                                                  : throw std::invalid_argument(
                                                        "scale kind must be E4M3, UE4M3 or UE8M0");
          return encode_scale(v, st, indicator);
        },
        py::arg("value"), py::arg("kind") = "E4M3", py::arg("indicator") = false);

  py::class_<QuantizedTensor>(m, "QuantizedTensor")
      .def_property_readonly("format", [](const QuantizedTensor& q) { return q.spec().name; })
      .def_readonly("shape", &QuantizedTensor::shape)
      .def_readonly("alpha", &QuantizedTensor::alpha)
      .def_property_readonly("scale_bytes",
                             [](const QuantizedTensor& q) {
                               return py::bytes(reinterpret_cast<const char*>(q.scale_bytes.data()),
                                                q.scale_bytes.size());
                             })
      .def_property_readonly("packed_codes",
                             [](const QuantizedTensor& q) {
                               return py::bytes(
                                   reinterpret_cast<const char*>(q.packed_codes.data()),
                                   q.packed_codes.size());
                             })
      .def("code", &QuantizedTensor::code, py::arg("row"), py::arg("col"))
      .def("to_bytes",
           [](const QuantizedTensor& q) {
             const auto b = write_absd(q);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& b) {
                    const std::string s = b;
                    return read_absd(std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
                  })
      .def("dequantize", [](const QuantizedTensor& q) { return to_array(dequantize(q)); })
      .def("__eq__", [](const QuantizedTensor& a, const QuantizedTensor& b) { return a == b; });

  m.def(
      "quantize",
      [](const F32Array& x, const std::string& format, const std::string& rounding,
         uint64_t seed, double scale_unbias, std::optional<float> alpha, unsigned threads) {
        QuantizeOptions o;
        o.rounding = parse_rounding(rounding);
        o.seed = seed;
        o.scale_unbias = scale_unbias;
        o.alpha = alpha;
        o.threads = threads;
        QuantizeStats st;
        QuantizedTensor q;
        {
          const Tensor t = to_tensor(x);
          py::gil_scoped_release release;
          q = quantize(t, builtin_format(format), o, &st);
        }
        py::dict stats;
        stats["blocks"] = st.blocks;
        stats["int_blocks"] = st.int_blocks;
        stats["mse"] = st.mse();
        stats["int_rate"] = st.int_rate();
        stats["sq_error"] = st.sq_error;
        return py::make_tuple(q, stats);
      },
      py::arg("x"), py::arg("format"), py::arg("rounding") = "nearest", py::arg("seed") = 0,
      py::arg("scale_unbias") = 1.0, py::arg("alpha") = py::none(), py::arg("threads") = 1);

  m.def("dequantize", [](const QuantizedTensor& q) { return to_array(dequantize(q)); });

  m.def(
      "quantize_block",
      [](const std::vector<float>& vals, float alpha, const std::string& format) {
        const BlockQuantResult r = quantize_block(vals, alpha, builtin_format(format));
        py::dict d;
        d["codes"] = r.codes;
        d["scale_byte"] = r.scale_byte;
        d["scale"] = r.scale;
        d["chose_int"] = r.chose_int;
        d["sq_error"] = r.sq_error;
        d["dequantized"] = dequantize_block(r.codes, r.scale_byte, alpha, builtin_format(format));
        return d;
      },
      py::arg("values"), py::arg("alpha"), py::arg("format"));

  m.def(
      "rht_forward",
      [](const std::vector<double>& x, uint64_t seed) {
        return rht_forward(x, HadamardConfig::make(x.size(), seed));
      },
      py::arg("x"), py::arg("seed"));
  m.def(
      "rht_inverse",
      [](const std::vector<double>& y, uint64_t seed) {
        return rht_inverse(y, HadamardConfig::make(y.size(), seed));
      },
      py::arg("y"), py::arg("seed"));

  m.def("half_from_float", [](double x) { return half_from_double(x).bits; });
  m.def("half_to_float", [](uint16_t bits) { return half_to_double(Half{bits}); });
  m.def(
      "mac_if4",
      [](const std::vector<uint8_t>& w, const std::vector<uint8_t>& a, uint8_t ws, uint8_t as,
         float acc) { return mac_call(true, w, a, ws, as, acc); },
      py::arg("w_codes"), py::arg("a_codes"), py::arg("w_scale"), py::arg("a_scale"),
      py::arg("acc") = 0.0f);
  m.def(
      "mac_nvfp4",
      [](const std::vector<uint8_t>& w, const std::vector<uint8_t>& a, uint8_t ws, uint8_t as,
         float acc) { return mac_call(false, w, a, ws, as, acc); },
      py::arg("w_codes"), py::arg("a_codes"), py::arg("w_scale"), py::arg("a_scale"),
      py::arg("acc") = 0.0f);
  m.def(
      "oracle_dot",
      [](const std::vector<uint8_t>& w, const std::vector<uint8_t>& a, uint8_t ws, uint8_t as,
         const std::string& format) {
        return oracle_dot(block_codes(w), block_codes(a), ws, as, builtin_format(format));
      },
      py::arg("w_codes"), py::arg("a_codes"), py::arg("w_scale"), py::arg("a_scale"),
      py::arg("format") = "IF4");

  m.def(
      "mse_gaussian",
      [](const std::string& format, std::size_t n, uint64_t seed, unsigned threads) {
        MseReport r;
        {
          py::gil_scoped_release release;
          r = mse_gaussian(builtin_format(format), n, seed, threads);
        }
        py::dict d;
        d["format"] = r.format;
        d["n_samples"] = r.n_samples;
        d["mse"] = r.mse;
        d["std_error"] = r.std_error;
        d["seed"] = r.seed;
        return d;
      },
      py::arg("format"), py::arg("n"), py::arg("seed"), py::arg("threads") = 1);

  m.def(
      "dynamic_range",
      [](const std::string& format) {
        const DynamicRange r = dynamic_range(builtin_format(format));
        py::dict d;
        d["max"] = r.max;
        d["min"] = r.min;
        d["relative"] = r.relative;
        return d;
      },
      py::arg("format"));

  m.def(
      "int_selection_rate",
      [](const F32Array& x, const std::string& format, std::optional<std::size_t> hadamard,
         uint64_t seed) {
        std::optional<HadamardConfig> cfg;
        if (hadamard) cfg = HadamardConfig::make(*hadamard, seed);
        return int_selection_rate(to_tensor(x), builtin_format(format), cfg);
      },
      py::arg("x"), py::arg("format") = "IF4", py::arg("hadamard") = py::none(),
      py::arg("seed") = 0);

  m.def(
      "mac_verify",
      [](std::size_t n, uint64_t seed) {
        MacVerifyReport r;
        {
          py::gil_scoped_release release;
          r = mac_verify(n, seed);
        }
        py::dict d;
        d["passed"] = r.passed();
        d["blocks"] = r.blocks;
        d["checked"] = r.checked;
        d["relative_failures"] = r.relative_failures;
        d["bound_failures"] = r.bound_failures;
        d["fp_only_blocks"] = r.fp_only_blocks;
        d["fp_only_mismatches"] = r.fp_only_mismatches;
        d["max_relative_error"] = r.max_relative_error;
        d["max_ulp_ratio"] = r.max_ulp_ratio;
        d["product_table_exact"] = r.product_table_exact;
        return d;
      },
      py::arg("n_blocks"), py::arg("seed"));
}
