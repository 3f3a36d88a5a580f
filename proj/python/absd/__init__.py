# SPDX-License-Identifier: Apache-2.0
"""Adaptive block-scaled data types (IF4, NVFP4, MXFP4 and relatives)."""

from ._core import (
    CorruptData,
    FormatSpec,
    QuantizedTensor,
    codebook_reference,
    dequantize,
    dynamic_range,
    encode_scale,
    format_names,
    get_format,
    half_from_float,
    half_to_float,
    int_selection_rate,
    mac_if4,
    mac_nvfp4,
    mac_verify,
    mse_gaussian,
    oracle_dot,
    quantize,
    quantize_block,
    rht_forward,
    rht_inverse,
)

__all__ = [
    "CorruptData",
    "FormatSpec",
    "QuantizedTensor",
    "codebook_reference",
    "dequantize",
    "dynamic_range",
    "encode_scale",
    "format_names",
    "get_format",
    "half_from_float",
    "half_to_float",
    "int_selection_rate",
    "mac_if4",
    "mac_nvfp4",
    "mac_verify",
    "mse_gaussian",
    "oracle_dot",
    "quantize",
    "quantize_block",
    "rht_forward",
    "rht_inverse",
]

__version__ = "0.1.0"
