"""Layer graph, exact plaintext reference, encrypted evaluation, HOP tally.

A NetworkSpec is an ordered list of layers over a fixed input shape.  Two
evaluators share it:

* `eval_plain` runs the real-arithmetic semantics (true averages, real
  activation coefficients) and is the fidelity oracle.
* `eval_encrypted` executes a compiled integer plan over a grid of
  ciphertexts (one per scalar), eliding pruned weights at compile time so
  the evaluator only ever branches on public weights.

The compiled plan also drives `project_hops`, a static count of the four
homomorphic-operation classes; instrumented execution must agree with it
exactly, which the tests pin.

Fixed-point bookkeeping: a tensor carries scale_exponent (power-of-two
scale) and scale_factor (the residual integer divisor from non-power-of-two
pooling windows); decode divides by both.  Activations square the factor
and fold their own precision bump into the exponent.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import encode as enc
from . import fv
from .approx import PolyApprox
from .encode import FixedPointConfig, round_half_away
from .fv import Ciphertext, EncryptionParams, EvalKeys, PublicKey, SecretKey


class EngineError(ValueError):
    pass


# --- layers ---------------------------------------------------------------------


@dataclass
class Conv2d:
    weights: np.ndarray  # (out_c, in_c, kh, kw)
    bias: np.ndarray | None
    stride: int = 1
    padding: int = 0
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 4:
            raise EngineError("conv weights must be 4-D (out, in, kh, kw)")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=np.float64)

    def effective_weights(self) -> np.ndarray:
        return self.weights if self.mask is None else self.weights * self.mask

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.weights.shape[1]:
            raise EngineError(
                f"conv expects {self.weights.shape[1]} input channels, got {c}"
            )
        oh = (h + 2 * self.padding - self.weights.shape[2]) // self.stride + 1
        ow = (w + 2 * self.padding - self.weights.shape[3]) // self.stride + 1
        if oh < 1 or ow < 1:
            raise EngineError("conv output collapses to zero size")
        return (self.weights.shape[0], oh, ow)

    def max_fan_in(self) -> int:
        return int(self.weights.shape[1] * self.weights.shape[2] * self.weights.shape[3])


@dataclass
class Dense:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray | None
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise EngineError("dense weights must be 2-D (out, in)")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=np.float64)

    def effective_weights(self) -> np.ndarray:
        return self.weights if self.mask is None else self.weights * self.mask

    def out_shape(self, in_shape):
        flat = int(np.prod(in_shape))
        if flat != self.weights.shape[1]:
            raise EngineError(
                f"dense expects {self.weights.shape[1]} inputs, got {flat}"
            )
        return (self.weights.shape[0],)

    def max_fan_in(self) -> int:
        return int(self.weights.shape[1])


@dataclass
class ScaledAvgPool:
    """Window summation; the divisor rides along as scale metadata.

    reciprocal=True instead multiplies each summed output by the encoded
    reciprocal of the window count (one extra PT-CT mult per output).
    """

    window: int
    stride: int = 1
    padding: int = 0
    reciprocal: bool = False

    def out_shape(self, in_shape):
        c, h, w = in_shape
        oh = (h + 2 * self.padding - self.window) // self.stride + 1
        ow = (w + 2 * self.padding - self.window) // self.stride + 1
        if oh < 1 or ow < 1:
            raise EngineError("pool output collapses to zero size")
        return (c, oh, ow)

    def window_count(self) -> int:
        return self.window * self.window


@dataclass
class BatchNormAffine:
    """Per-channel scale and shift; fold into a neighbor before encryption."""

    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=np.float64)
        self.shift = np.asarray(self.shift, dtype=np.float64)

    def out_shape(self, in_shape):
        return in_shape


@dataclass
class PolyActivation:
    poly: PolyApprox

    def __post_init__(self):
        if self.poly.degree != 2:
            raise EngineError("encrypted activations are degree-2 polynomials")

    def out_shape(self, in_shape):
        return in_shape

    def coefficients(self) -> tuple[float, float, float]:
        c0, c1, c2 = self.poly.coeffs
        if c2 == 0.0:
            raise EngineError("activation quadratic coefficient must be nonzero")
        return c2, c1, c0


Layer = Conv2d | Dense | ScaledAvgPool | BatchNormAffine | PolyActivation


@dataclass
class NetworkSpec:
    input_shape: tuple[int, ...]
    layers: list

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        acts = sum(isinstance(l, PolyActivation) for l in self.layers)
        if acts > 3:
            raise EngineError(
                f"{acts} activation layers exceed the depth budget of 3"
            )
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape

    def shapes(self) -> list[tuple[int, ...]]:
        out = [self.input_shape]
        for layer in self.layers:
            out.append(layer.out_shape(out[-1]))
        return out


# --- plaintext reference ----------------------------------------------------------


def _conv_plain(layer: Conv2d, x: np.ndarray) -> np.ndarray:
    w = layer.effective_weights()
    oc, ic, kh, kw = w.shape
    _, oh, ow = layer.out_shape(x.shape)
    pad = layer.padding
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((oc, oh, ow))
    for o in range(oc):
        for i in range(oh):
            for j in range(ow):
                r, c = i * layer.stride, j * layer.stride
                out[o, i, j] = float(np.sum(w[o] * xp[:, r : r + kh, c : c + kw]))
    if layer.bias is not None:
        out += layer.bias[:, None, None]
    return out


def _pool_plain(layer: ScaledAvgPool, x: np.ndarray) -> np.ndarray:
    c, oh, ow = layer.out_shape(x.shape)
    pad = layer.padding
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((c, oh, ow))
    k = layer.window_count()
    inv = 1.0 / k
    for ch in range(c):
        for i in range(oh):
            for j in range(ow):
                r, col = i * layer.stride, j * layer.stride
                out[ch, i, j] = (
                    float(np.sum(xp[ch, r : r + layer.window, col : col + layer.window]))
                    * inv
                )
    return out


def eval_plain(net: NetworkSpec, x: np.ndarray) -> np.ndarray:
    """Exact real-arithmetic forward pass; the oracle for encrypted fidelity."""
    x = np.asarray(x, dtype=np.float64).reshape(net.input_shape)
    for layer in net.layers:
        if isinstance(layer, Conv2d):
            x = _conv_plain(layer, x)
        elif isinstance(layer, Dense):
            flat = x.reshape(-1)
            x = layer.effective_weights() @ flat
            if layer.bias is not None:
                x = x + layer.bias
        elif isinstance(layer, ScaledAvgPool):
            x = _pool_plain(layer, x)
        elif isinstance(layer, BatchNormAffine):
            if x.ndim == 3:
                x = x * layer.scale[:, None, None] + layer.shift[:, None, None]
            else:
                x = x * layer.scale + layer.shift
        elif isinstance(layer, PolyActivation):
            x = layer.poly.evaluate(x)
        else:
            raise EngineError(f"unknown layer {type(layer).__name__}")
    return x


# --- batch-norm folding ------------------------------------------------------------


def fold_batchnorm(net: NetworkSpec) -> NetworkSpec:
    """Absorb every BatchNormAffine into the preceding Conv2d/Dense."""
    layers: list = []
    for layer in net.layers:
        if not isinstance(layer, BatchNormAffine):
            layers.append(layer)
            continue
        if not layers or not isinstance(layers[-1], (Conv2d, Dense)):
            raise EngineError("batch norm has no foldable conv/dense neighbor")
        prev = layers.pop()
        scale, shift = layer.scale, layer.shift
        if isinstance(prev, Conv2d):
            w = prev.weights * scale[:, None, None, None]
            b = (prev.bias if prev.bias is not None else 0.0) * scale + shift
            layers.append(Conv2d(w, b, prev.stride, prev.padding, prev.mask))
        else:
            w = prev.weights * scale[:, None]
            b = (prev.bias if prev.bias is not None else 0.0) * scale + shift
            layers.append(Dense(w, b, prev.mask))
    return NetworkSpec(net.input_shape, layers)


# --- HOP accounting -----------------------------------------------------------------


@dataclass
class LayerCounts:
    pt_ct_add: int = 0
    ct_ct_add: int = 0
    pt_ct_mul: int = 0
    ct_ct_mul: int = 0
    fast_path_hits: int = 0
    wall_ms: float = 0.0

    def total(self) -> int:
        return self.pt_ct_add + self.ct_ct_add + self.pt_ct_mul + self.ct_ct_mul

    def add(self, other: "LayerCounts") -> None:
        self.pt_ct_add += other.pt_ct_add
        self.ct_ct_add += other.ct_ct_add
        self.pt_ct_mul += other.pt_ct_mul
        self.ct_ct_mul += other.ct_ct_mul
        self.fast_path_hits += other.fast_path_hits
        self.wall_ms += other.wall_ms

    def same_ops(self, other: "LayerCounts") -> bool:
        return (
            self.pt_ct_add == other.pt_ct_add
            and self.ct_ct_add == other.ct_ct_add
            and self.pt_ct_mul == other.pt_ct_mul
            and self.ct_ct_mul == other.ct_ct_mul
        )


@dataclass
class HopCounter:
    layer_names: list = field(default_factory=list)
    layer_counts: list = field(default_factory=list)

    def layer(self, name: str) -> LayerCounts:
        self.layer_names.append(name)
        self.layer_counts.append(LayerCounts())
        return self.layer_counts[-1]

    @property
    def totals(self) -> LayerCounts:
        t = LayerCounts()
        for c in self.layer_counts:
            t.add(c)
        return t

    def merge(self, other: "HopCounter") -> None:
        """Sum per-layer tallies; deterministic regardless of worker order."""
        if self.layer_names != other.layer_names:
            raise EngineError("cannot merge counters over different layer lists")
        for mine, theirs in zip(self.layer_counts, other.layer_counts):
            mine.add(theirs)

    def same_ops(self, other: "HopCounter") -> bool:
        return self.layer_names == other.layer_names and all(
            a.same_ops(b) for a, b in zip(self.layer_counts, other.layer_counts)
        )

    def rows(self) -> list[tuple]:
        out = []
        for name, c in zip(self.layer_names, self.layer_counts):
            out.append(
                (name, c.pt_ct_add, c.ct_ct_add, c.pt_ct_mul, c.ct_ct_mul, c.wall_ms, c.fast_path_hits)
            )
        return out


# --- compiled integer plan -----------------------------------------------------------


@dataclass(frozen=True)
class TapPlan:
    in_index: int
    weight_int: int


@dataclass(frozen=True)
class LinearOut:
    taps: tuple[TapPlan, ...]
    bias_int: int | None


@dataclass(frozen=True)
class LinearPlan:
    name: str
    outputs: tuple[LinearOut, ...]


@dataclass(frozen=True)
class PoolPlan:
    name: str
    outputs: tuple[tuple[int, ...], ...]
    count: int
    pow2_shift: int          # log2(count) when count is a power of two, else 0
    factor_mult: int         # count when not a power of two, else 1
    reciprocal_int: int | None


@dataclass(frozen=True)
class ActPlan:
    name: str
    nodes: int
    a2_int: int | None       # None when a2 == 1 (multiply elided)
    a1_mult_int: int | None  # full integer multiplier for the linear term
    a0_add_int: int | None
    scale_bump: int          # exponent added beyond the doubling


@dataclass(frozen=True)
class CompiledNet:
    plans: tuple
    in_scale: int
    out_scale: int
    out_factor: int
    out_shape: tuple[int, ...]


def _conv_taps(layer: Conv2d, in_shape, prec: int):
    """Per-output (channel, tap list); pruned weights and pad positions absent."""
    c_in, h, w = in_shape
    oc, _, kh, kw = layer.weights.shape
    _, oh, ow = layer.out_shape(in_shape)
    eff = layer.effective_weights()
    outputs = []
    for o in range(oc):
        w_int = [
            [
                [round_half_away(float(eff[o, ci, di, dj]) * (1 << prec)) for dj in range(kw)]
                for di in range(kh)
            ]
            for ci in range(c_in)
        ]
        for i in range(oh):
            for j in range(ow):
                taps = []
                r0, c0 = i * layer.stride - layer.padding, j * layer.stride - layer.padding
                for ci in range(c_in):
                    for di in range(kh):
                        for dj in range(kw):
                            r, c = r0 + di, c0 + dj
                            if not (0 <= r < h and 0 <= c < w):
                                continue
                            wi = w_int[ci][di][dj]
                            if wi == 0:
                                continue
                            taps.append(TapPlan((ci * h + r) * w + c, wi))
                outputs.append((o, taps))
    return outputs


def compile_network(net: NetworkSpec, cfg: FixedPointConfig) -> CompiledNet:
    """Lower a network to an integer plan with static scale bookkeeping.

    Zero (pruned or rounded-away) weights vanish here, so the encrypted
    evaluator never tests secret data; it replays a fixed public schedule.
    """
    prec = cfg.precision_bits
    plans = []
    shape = net.input_shape
    scale = prec
    factor = 1
    for ix, layer in enumerate(net.layers):
        name = f"{type(layer).__name__.lower()}-{ix}"
        if isinstance(layer, BatchNormAffine):
            raise EngineError("fold batch norm before compiling for encryption")
        if isinstance(layer, Conv2d):
            outs = []
            for o_chan, taps in _conv_taps(layer, shape, prec):
                bias_int = None
                if layer.bias is not None:
                    bias_int = round_half_away(
                        float(layer.bias[o_chan]) * (1 << (scale + prec)) * factor
                    )
                outs.append(LinearOut(tuple(taps), bias_int))
            plans.append(LinearPlan(name, tuple(outs)))
            scale += prec
            shape = layer.out_shape(shape)
        elif isinstance(layer, Dense):
            eff = layer.effective_weights()
            outs = []
            for o in range(eff.shape[0]):
                taps = []
                for i in range(eff.shape[1]):
                    wi = round_half_away(float(eff[o, i]) * (1 << prec))
                    if wi:
                        taps.append(TapPlan(i, wi))
                bias_int = None
                if layer.bias is not None:
                    bias_int = round_half_away(
                        float(layer.bias[o]) * (1 << (scale + prec)) * factor
                    )
                outs.append(LinearOut(tuple(taps), bias_int))
            plans.append(LinearPlan(name, tuple(outs)))
            scale += prec
            shape = layer.out_shape(shape)
        elif isinstance(layer, ScaledAvgPool):
            c, h, w = shape
            _, oh, ow = layer.out_shape(shape)
            outs = []
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        idxs = []
                        r0 = i * layer.stride - layer.padding
                        c0 = j * layer.stride - layer.padding
                        for di in range(layer.window):
                            for dj in range(layer.window):
                                r, col = r0 + di, c0 + dj
                                if 0 <= r < h and 0 <= col < w:
                                    idxs.append((ch * h + r) * w + col)
                        outs.append(tuple(idxs))
            k = layer.window_count()
            recip = None
            shift = 0
            fmult = 1
            if layer.reciprocal:
                recip = round_half_away((1.0 / k) * (1 << prec))
                scale += prec
            elif k & (k - 1) == 0:
                shift = k.bit_length() - 1
                scale += shift
            else:
                fmult = k
                factor *= k
            plans.append(PoolPlan(name, tuple(outs), k, shift, fmult, recip))
            shape = layer.out_shape(shape)
        elif isinstance(layer, PolyActivation):
            a2, a1, a0 = layer.coefficients()
            nodes = int(np.prod(shape))
            a2_int = None if a2 == 1.0 else round_half_away(a2 * (1 << prec))
            bump = 0 if a2 == 1.0 else prec
            a1_mult = None
            if a1 != 0.0:
                a1_mult = round_half_away(a1 * (1 << prec)) * (1 << (scale + bump - prec)) * factor
            a0_add = None
            if a0 != 0.0:
                a0_add = round_half_away(a0 * (1 << (2 * scale + bump)) * factor * factor)
            plans.append(ActPlan(name, nodes, a2_int, a1_mult, a0_add, bump))
            scale = 2 * scale + bump
            factor = factor * factor
        else:
            raise EngineError(f"unknown layer {type(layer).__name__}")
    return CompiledNet(tuple(plans), cfg.precision_bits, scale, factor, shape)


# --- static projection ----------------------------------------------------------------


def project_hops(net: NetworkSpec, cfg: FixedPointConfig | None = None) -> HopCounter:
    """Predicted HOP counts from the compiled plan alone (no crypto).

    Counting rule: one PT-CT mult per surviving weight application, one
    CT-CT add per output beyond its first term, one PT-CT add per biased
    output; pools contribute CT-CT adds only (reciprocal mode adds one
    PT-CT mult per output); a quadratic activation node costs one CT-CT
    mult, up to two PT-CT mults, one CT-CT add, and one PT-CT add, with
    zero coefficients (and a unit quadratic term) elided.
    """
    cfg = cfg or FixedPointConfig(t_lanes=(1099511922689,))
    compiled = compile_network(net, cfg)
    counter = HopCounter()
    for plan in compiled.plans:
        c = counter.layer(plan.name)
        if isinstance(plan, LinearPlan):
            for out in plan.outputs:
                c.pt_ct_mul += len(out.taps)
                c.fast_path_hits += sum(
                    1 for t in out.taps if _int_is_monomial(t.weight_int)
                )
                if len(out.taps) > 1:
                    c.ct_ct_add += len(out.taps) - 1
                if out.bias_int is not None:
                    c.pt_ct_add += 1
        elif isinstance(plan, PoolPlan):
            for idxs in plan.outputs:
                if len(idxs) > 1:
                    c.ct_ct_add += len(idxs) - 1
                if plan.reciprocal_int is not None:
                    c.pt_ct_mul += 1
                    c.fast_path_hits += _int_is_monomial(plan.reciprocal_int)
        elif isinstance(plan, ActPlan):
            c.ct_ct_mul += plan.nodes
            terms = 1
            if plan.a2_int is not None:
                c.pt_ct_mul += plan.nodes
                c.fast_path_hits += plan.nodes * _int_is_monomial(plan.a2_int)
            if plan.a1_mult_int is not None:
                c.pt_ct_mul += plan.nodes
                c.fast_path_hits += plan.nodes * _int_is_monomial(plan.a1_mult_int)
                terms += 1
            if terms > 1:
                c.ct_ct_add += plan.nodes
            if plan.a0_add_int is not None:
                c.pt_ct_add += plan.nodes
    return counter


def _int_is_monomial(z: int) -> bool:
    z = abs(int(z))
    return z != 0 and (z & (z - 1)) == 0


# --- encrypted evaluation ----------------------------------------------------------------


@dataclass
class CipherTensor:
    """Grid of ciphertexts sharing lane and scale; one ciphertext per scalar."""

    shape: tuple[int, ...]
    cts: list
    scale_exponent: int
    scale_factor: int = 1

    def __post_init__(self):
        if len(self.cts) != int(np.prod(self.shape)):
            raise EngineError("ciphertext count does not match tensor shape")

    @property
    def lane(self) -> int:
        return self.cts[0].lane


def encrypt_tensor(
    pk: PublicKey,
    params: EncryptionParams,
    values: np.ndarray,
    cfg: FixedPointConfig,
    lane: int = 0,
    rng=None,
) -> CipherTensor:
    values = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    t = int(params.t_lanes[lane])
    cts = []
    for v in values.ravel():
        z = round_half_away(float(v) * (1 << cfg.precision_bits))
        cts.append(
            fv.encrypt(pk, params, enc.encode_integer(z, t), lane, cfg.precision_bits, rng)
        )
    return CipherTensor(tuple(values.shape), cts, cfg.precision_bits, 1)


def decrypt_tensor(sk: SecretKey, tensor: CipherTensor) -> list:
    return [fv.decrypt(sk, ct) for ct in tensor.cts]


def decode_lane_outputs(
    lane_plaintexts: list[list],
    tensor_shape: tuple[int, ...],
    scale_exponent: int,
    scale_factor: int,
    cfg: FixedPointConfig,
) -> np.ndarray:
    """Combine per-lane decrypted grids into the real-valued output tensor."""
    count = int(np.prod(tensor_shape))
    out = np.zeros(count)
    for i in range(count):
        out[i] = enc.decode_fixed(
            [lane[i] for lane in lane_plaintexts], scale_exponent, cfg, scale_factor
        )
    return out.reshape(tensor_shape)


def eval_encrypted(
    net: NetworkSpec,
    tensor: CipherTensor,
    ek: EvalKeys,
    cfg: FixedPointConfig,
    workers: int = 1,
) -> tuple[CipherTensor, HopCounter]:
    """Execute the compiled plan over ciphertexts, tallying every HOP.

    Output elements of a layer are independent, so they may be computed by
    a worker pool; each worker owns a private counter and the merge is a
    sum, making the tally schedule-independent.
    """
    params = tensor.cts[0].params
    lane = tensor.lane
    t = int(params.t_lanes[lane])
    if int(cfg.t_lanes[lane]) != t:
        raise EngineError("fixed-point lane configuration disagrees with ciphertexts")
    acts = sum(isinstance(l, PolyActivation) for l in net.layers)
    if acts > params.mul_depth_budget:
        raise EngineError(
            f"{acts} activations exceed the parameter depth budget "
            f"{params.mul_depth_budget}"
        )
    compiled = compile_network(net, cfg)
    counter = HopCounter()
    cur = tensor.cts
    scale = tensor.scale_exponent
    factor = tensor.scale_factor
    prec = cfg.precision_bits

    def run_outputs(fn, count: int, layer_counts: LayerCounts):
        if workers <= 1 or count <= 1:
            return [fn(i, layer_counts) for i in range(count)]
        partials = [LayerCounts() for _ in range(count)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: fn(i, partials[i]), range(count)))
        for p in partials:
            layer_counts.add(p)
        return results

    for plan in compiled.plans:
        lc = counter.layer(plan.name)
        t0 = time.perf_counter()
        if isinstance(plan, LinearPlan):
            in_cts = cur

            def lin_out(i, value, _plan=plan, _in=in_cts, _scale=scale):
                out = _plan.outputs[i]
                acc = None
                for tap in out.taps:
                    m = enc.encode_integer(tap.weight_int, t)
                    value.pt_ct_mul += 1
                    value.fast_path_hits += fv.is_monomial_plain(m)
                    term = fv.mul_pt(_in[tap.in_index], m, prec)
                    if acc is None:
                        acc = term
                    else:
                        value.ct_ct_add += 1
                        acc = fv.add_ct(acc, term)
                if acc is None:
                    acc = Ciphertext.zero(params, lane, _scale + prec)
                if out.bias_int is not None:
                    value.pt_ct_add += 1
                    acc = fv.add_pt(acc, enc.encode_integer(out.bias_int, t))
                return acc

            cur = run_outputs(lin_out, len(plan.outputs), lc)
            scale += prec
        elif isinstance(plan, PoolPlan):
            in_cts = cur

            def pool_out(i, value, _plan=plan, _in=in_cts):
                acc = None
                for idx in _plan.outputs[i]:
                    if acc is None:
                        acc = _in[idx]
                    else:
                        value.ct_ct_add += 1
                        acc = fv.add_ct(acc, _in[idx])
                if _plan.reciprocal_int is not None:
                    m = enc.encode_integer(_plan.reciprocal_int, t)
                    value.pt_ct_mul += 1
                    value.fast_path_hits += fv.is_monomial_plain(m)
                    acc = fv.mul_pt(acc, m, prec)
                return acc

            cur = run_outputs(pool_out, len(plan.outputs), lc)
            if plan.reciprocal_int is not None:
                scale += prec
            else:
                scale += plan.pow2_shift
                factor *= plan.factor_mult
        elif isinstance(plan, ActPlan):
            in_cts = cur

            def act_out(i, value, _plan=plan, _in=in_cts):
                x = _in[i]
                value.ct_ct_mul += 1
                sq = fv.mul_ct(x, x, ek)
                if _plan.a2_int is not None:
                    m = enc.encode_integer(_plan.a2_int, t)
                    value.pt_ct_mul += 1
                    value.fast_path_hits += fv.is_monomial_plain(m)
                    acc = fv.mul_pt(sq, m, prec)
                else:
                    acc = sq
                if _plan.a1_mult_int is not None:
                    m1 = enc.encode_integer(_plan.a1_mult_int, t)
                    value.pt_ct_mul += 1
                    value.fast_path_hits += fv.is_monomial_plain(m1)
                    lin = fv.mul_pt(x, m1, acc.scale_exponent - x.scale_exponent)
                    value.ct_ct_add += 1
                    acc = fv.add_ct(acc, lin)
                if _plan.a0_add_int is not None:
                    value.pt_ct_add += 1
                    acc = fv.add_pt(acc, enc.encode_integer(_plan.a0_add_int, t))
                return acc

            cur = run_outputs(act_out, plan.nodes, lc)
            scale = 2 * scale + plan.scale_bump
            factor = factor * factor
        lc.wall_ms += (time.perf_counter() - t0) * 1000.0
    return CipherTensor(compiled.out_shape, cur, scale, factor), counter


# --- reference configurations -----------------------------------------------------------


MNIST_SPARSITIES = {"conv1": 0.1440, "conv2": 0.0701, "fc1": 0.0568, "fc2": 0.1480}


def build_mnist_configs(maps: int = 5, seed: int = 2018):
    """The dense/square and pruned/Swish digit-classifier configurations.

    Both use `maps` feature maps in the first convolution (the 5-map
    reading makes the activation grid 5*13*13 = 845 nodes); batch norm is
    already folded.  Weights are deterministic pseudo-random stand-ins:
    HOP structure depends only on masks, shapes, and activation form.
    """
    from . import compress
    from .approx import square_activation, swish_pstar

    rng = np.random.default_rng(seed)

    def he_init(*shape):
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
        return rng.normal(0.0, math.sqrt(2.0 / fan_in), shape)

    def make_layers(activation):
        return [
            Conv2d(he_init(maps, 1, 5, 5), rng.normal(0, 0.1, maps), stride=2, padding=1),
            PolyActivation(activation),
            ScaledAvgPool(3, stride=1, padding=1),
            Conv2d(he_init(50, maps, 5, 5), rng.normal(0, 0.1, 50), stride=2, padding=0),
            ScaledAvgPool(3, stride=1, padding=1),
            Dense(he_init(100, 1250), rng.normal(0, 0.1, 100)),
            PolyActivation(activation),
            Dense(he_init(10, 100), rng.normal(0, 0.1, 10)),
        ]

    cryptonets = NetworkSpec((1, 28, 28), make_layers(square_activation()))

    faster = NetworkSpec((1, 28, 28), make_layers(swish_pstar()))
    order = ["conv1", "conv2", "fc1", "fc2"]
    weighted = [l for l in faster.layers if isinstance(l, (Conv2d, Dense))]
    for name, layer in zip(order, weighted):
        wt = compress.WeightTensor(layer.weights)
        pruned = compress.prune_mask(wt, MNIST_SPARSITIES[name])
        spec = compress.quant_bounds(pruned)
        quant = compress.quantize_to_pow2(pruned, spec, 1.0)
        layer.mask = (quant.effective() != 0.0).astype(np.float64)
        layer.weights = quant.values * layer.mask
    return cryptonets, faster
