"""Binary model container ("FCNW"): layers, masks, and quantized exponents.

Layout (all little-endian):

    magic "FCNW" | u16 version | u16 layer_count
    u8 input_ndim | u32 * input_ndim input dims
    per layer: u8 type tag, then the tag-specific record below

    tag 1 Conv2d:  u32 dims[4] (out,in,kh,kw), u8 stride, u8 padding,
                   u8 has_bias, f64 weights (row-major),
                   [f64 bias * out], mask bitset ceil(N/8) bytes,
                   u8 quant_flag, [i16 exponents * N]
    tag 2 Dense:   u32 dims[2] (out,in), u8 has_bias, weights, [bias],
                   mask bitset, u8 quant_flag, [i16 exponents * N]
    tag 3 Pool:    u8 window, u8 stride, u8 padding, u8 mode (0 sum,
                   1 reciprocal)
    tag 4 BatchNorm: u32 channels, f64 scale * C, f64 shift * C
    tag 5 Activation: u8 degree, u8 form (0 real, 1 pow2);
                   real: f64 coeffs * (degree+1);
                   pow2: (i8 sign, i16 exponent) * (degree+1);
                   f64 interval, f64 delta

The quantization flag is set exactly when every surviving weight is an
exact signed power of two; the exponent array then lists, per weight slot,
the exponent (0 where masked or zero).  The loader re-derives the flag
from the values and refuses files where the two disagree.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .approx import PolyApprox, realize_pow2
from .engine import (
    BatchNormAffine,
    Conv2d,
    Dense,
    NetworkSpec,
    PolyActivation,
    ScaledAvgPool,
)

MAGIC = b"FCNW"
VERSION = 1

TAG_CONV = 1
TAG_DENSE = 2
TAG_POOL = 3
TAG_BATCHNORM = 4
TAG_ACTIVATION = 5


class WeightsError(ValueError):
    pass


def _pack_mask(mask: np.ndarray) -> bytes:
    return np.packbits(mask.ravel().astype(bool), bitorder="little").tobytes()


def _unpack_mask(data: bytes, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    return bits[:count].astype(np.float64)


def _pow2_exponents(values: np.ndarray) -> np.ndarray | None:
    """Exponent per entry when every nonzero value is +-2^e, else None."""
    exps = np.zeros(values.size, dtype=np.int16)
    for i, v in enumerate(values.ravel()):
        if v == 0.0:
            continue
        e = math.log2(abs(v))
        if abs(e - round(e)) > 1e-12 or not -32768 <= round(e) < 32768:
            return None
        exps[i] = int(round(e))
    return exps


def _weight_block(weights: np.ndarray, bias, mask) -> bytes:
    eff = weights if mask is None else weights * mask
    out = b""
    out += struct.pack("<B", 1 if bias is not None else 0)
    out += weights.astype("<f8").tobytes()
    if bias is not None:
        out += np.asarray(bias).astype("<f8").tobytes()
    m = np.ones_like(weights) if mask is None else mask
    out += _pack_mask(m)
    exps = _pow2_exponents(eff)
    if exps is None:
        out += struct.pack("<B", 0)
    else:
        out += struct.pack("<B", 1) + exps.astype("<i2").tobytes()
    return out


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise WeightsError("truncated weights file")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def _read_weight_block(r: _Reader, shape) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    count = int(np.prod(shape))
    (has_bias,) = r.unpack("<B")
    weights = r.f64(count).reshape(shape)
    bias = r.f64(shape[0]) if has_bias else None
    mask = _unpack_mask(r.take((count + 7) // 8), count).reshape(shape)
    (quant,) = r.unpack("<B")
    eff = weights * mask
    if quant:
        exps = np.frombuffer(r.take(2 * count), dtype="<i2").reshape(shape)
        for idx in np.ndindex(*shape):
            v = eff[idx]
            if v != 0.0 and abs(v) != 2.0 ** float(exps[idx]):
                raise WeightsError(
                    f"exponent array disagrees with weight value at {idx}"
                )
        if _pow2_exponents(eff) is None:
            raise WeightsError("quantization flag set on non-power-of-two weights")
    elif _pow2_exponents(eff) is not None and np.any(eff != 0.0):
        raise WeightsError("power-of-two weights stored without their exponent array")
    return weights, bias, mask


def save_network(net: NetworkSpec, path) -> None:
    blob = MAGIC + struct.pack("<HH", VERSION, len(net.layers))
    blob += struct.pack("<B", len(net.input_shape))
    blob += struct.pack(f"<{len(net.input_shape)}I", *net.input_shape)
    for layer in net.layers:
        if isinstance(layer, Conv2d):
            blob += struct.pack("<B", TAG_CONV)
            blob += struct.pack("<4I", *layer.weights.shape)
            blob += struct.pack("<BB", layer.stride, layer.padding)
            blob += _weight_block(layer.weights, layer.bias, layer.mask)
        elif isinstance(layer, Dense):
            blob += struct.pack("<B", TAG_DENSE)
            blob += struct.pack("<2I", *layer.weights.shape)
            blob += _weight_block(layer.weights, layer.bias, layer.mask)
        elif isinstance(layer, ScaledAvgPool):
            blob += struct.pack(
                "<BBBBB", TAG_POOL, layer.window, layer.stride, layer.padding,
                1 if layer.reciprocal else 0,
            )
        elif isinstance(layer, BatchNormAffine):
            blob += struct.pack("<BI", TAG_BATCHNORM, layer.scale.size)
            blob += layer.scale.astype("<f8").tobytes()
            blob += layer.shift.astype("<f8").tobytes()
        elif isinstance(layer, PolyActivation):
            p = layer.poly
            blob += struct.pack("<BBB", TAG_ACTIVATION, p.degree, 1 if p.is_pow2 else 0)
            if p.is_pow2:
                for s, e in p.pow2_terms:
                    blob += struct.pack("<bh", s, e)
            else:
                blob += np.asarray(p.coeffs).astype("<f8").tobytes()
            blob += struct.pack("<dd", p.interval_a, p.delta)
        else:
            raise WeightsError(f"cannot serialize layer {type(layer).__name__}")
    with open(path, "wb") as fh:
        fh.write(blob)


def load_network(path) -> NetworkSpec:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != MAGIC:
        raise WeightsError("not a weights file (bad magic)")
    version, layer_count = r.unpack("<HH")
    if version != VERSION:
        raise WeightsError(f"unsupported weights version {version}")
    (ndim,) = r.unpack("<B")
    input_shape = r.unpack(f"<{ndim}I")
    layers: list = []
    for _ in range(layer_count):
        (tag,) = r.unpack("<B")
        if tag == TAG_CONV:
            dims = r.unpack("<4I")
            stride, padding = r.unpack("<BB")
            w, b, m = _read_weight_block(r, dims)
            layers.append(Conv2d(w, b, stride, padding, m))
        elif tag == TAG_DENSE:
            dims = r.unpack("<2I")
            w, b, m = _read_weight_block(r, dims)
            layers.append(Dense(w, b, m))
        elif tag == TAG_POOL:
            window, stride, padding, mode = r.unpack("<BBBB")
            layers.append(ScaledAvgPool(window, stride, padding, bool(mode)))
        elif tag == TAG_BATCHNORM:
            (channels,) = r.unpack("<I")
            scale = r.f64(channels)
            shift = r.f64(channels)
            layers.append(BatchNormAffine(scale, shift))
        elif tag == TAG_ACTIVATION:
            degree, form = r.unpack("<BB")
            if form:
                terms = tuple(r.unpack("<bh") for _ in range(degree + 1))
                coeffs = realize_pow2(terms)
            else:
                terms = None
                coeffs = tuple(r.f64(degree + 1))
            interval, delta = r.unpack("<dd")
            layers.append(
                PolyActivation(
                    PolyApprox(
                        degree=degree,
                        coeffs=coeffs,
                        interval_a=interval,
                        delta=delta,
                        pow2_terms=terms,
                    )
                )
            )
        else:
            raise WeightsError(f"unknown layer tag {tag}")
    if r.off != len(r.data):
        raise WeightsError("trailing bytes after final layer")
    return NetworkSpec(input_shape, layers)
