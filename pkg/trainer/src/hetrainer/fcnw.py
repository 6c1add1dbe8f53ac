"""Standalone writer for the FCNW weight-container format.

Mirrors the inference engine's documented byte layout (little-endian):

    "FCNW" | u16 version=1 | u16 layer_count
    u8 input_ndim | u32 * ndim input dims
    per layer: u8 tag (1 conv, 2 dense, 3 pool, 5 activation), then:
      conv: u32 dims[4], u8 stride, u8 padding, u8 has_bias, f64 weights,
            [f64 bias], mask bitset, u8 quant_flag, [i16 exponents]
      dense: u32 dims[2], u8 has_bias, ... (same tail as conv)
      pool: u8 window, u8 stride, u8 padding, u8 mode
      activation: u8 degree, u8 form, pow2 (i8, i16) per coeff or f64
            coeffs, f64 interval, f64 delta

The quantization flag must be set exactly when every surviving weight is
an exact signed power of two, with the exponent array alongside; the
engine's loader re-verifies both directions.
"""

from __future__ import annotations

import math
import struct

import numpy as np

MAGIC = b"FCNW"
VERSION = 1
TAG_CONV = 1
TAG_DENSE = 2
TAG_POOL = 3
TAG_ACTIVATION = 5


def _pow2_exponents(values: np.ndarray) -> np.ndarray | None:
    exps = np.zeros(values.size, dtype=np.int16)
    for i, v in enumerate(values.ravel()):
        if v == 0.0:
            continue
        e = math.log2(abs(v))
        if abs(e - round(e)) > 1e-12 or not -32768 <= round(e) < 32768:
            return None
        exps[i] = int(round(e))
    return exps


def _weight_tail(weights: np.ndarray, bias: np.ndarray | None, mask: np.ndarray) -> bytes:
    eff = weights * mask
    out = struct.pack("<B", 1 if bias is not None else 0)
    out += np.ascontiguousarray(weights).astype("<f8").tobytes()
    if bias is not None:
        out += np.ascontiguousarray(bias).astype("<f8").tobytes()
    out += np.packbits(mask.ravel().astype(bool), bitorder="little").tobytes()
    exps = _pow2_exponents(eff)
    if exps is None:
        out += struct.pack("<B", 0)
    else:
        out += struct.pack("<B", 1) + exps.astype("<i2").tobytes()
    return out


def write_fcnw(records: list, input_shape, path) -> None:
    """Serialize ('conv'|'dense'|'pool'|'act', payload) records.

    conv payload:  (weights, bias, stride, padding, mask)
    dense payload: (weights, bias, mask)
    pool payload:  (window, stride, padding)
    act payload:   ((sign, exp) triple, interval, delta)
    """
    blob = MAGIC + struct.pack("<HH", VERSION, len(records))
    blob += struct.pack("<B", len(input_shape))
    blob += struct.pack(f"<{len(input_shape)}I", *input_shape)
    for kind, payload in records:
        if kind == "conv":
            w, b, stride, padding, mask = payload
            blob += struct.pack("<B", TAG_CONV)
            blob += struct.pack("<4I", *w.shape)
            blob += struct.pack("<BB", stride, padding)
            blob += _weight_tail(w, b, mask)
        elif kind == "dense":
            w, b, mask = payload
            blob += struct.pack("<B", TAG_DENSE)
            blob += struct.pack("<2I", *w.shape)
            blob += _weight_tail(w, b, mask)
        elif kind == "pool":
            window, stride, padding = payload
            blob += struct.pack("<BBBBB", TAG_POOL, window, stride, padding, 0)
        elif kind == "act":
            terms, interval, delta = payload
            blob += struct.pack("<BBB", TAG_ACTIVATION, len(terms) - 1, 1)
            for s, e in terms:
                blob += struct.pack("<bh", s, e)
            blob += struct.pack("<dd", interval, delta)
        else:
            raise ValueError(f"cannot serialize record kind {kind!r}")
    with open(path, "wb") as fh:
        fh.write(blob)
