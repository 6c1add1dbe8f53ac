"""Magnitude pruning masks and incremental power-of-two quantization.

Pruning keeps the ceil(target * N) largest-magnitude entries of a tensor
(target is the *surviving* fraction).  Quantization snaps surviving weights
onto the codebook P = {-2^n1..-2^n2, 0, 2^n2..2^n1} derived from the layer
maximum s via n1 = floor(log2(4s/3)) and n2 = n1 + 1 - 2^(k-1)/2; partial
fractions quantize only the largest weights, which is what the iterative
retraining schedule drives.

Snapping uses arithmetic-midpoint bins in the power-of-two ladder: |w|
lands on 2^p when 0.75 * 2^p <= |w| < 1.5 * 2^p, anything below
0.75 * 2^n2 collapses to zero, ties go to the larger magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class CompressError(ValueError):
    pass


@dataclass
class WeightTensor:
    """Values with a binary mask; the effective weight is values * mask."""

    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.mask is None:
            self.mask = np.ones_like(self.values)
        else:
            self.mask = np.asarray(self.mask, dtype=np.float64)
            if self.mask.shape != self.values.shape:
                raise CompressError("mask shape must match values shape")

    @property
    def shape(self):
        return self.values.shape

    def effective(self) -> np.ndarray:
        return self.values * self.mask

    def surviving_fraction(self) -> float:
        return float(np.count_nonzero(self.effective())) / max(1, self.values.size)


@dataclass(frozen=True)
class QuantSpec:
    """Codebook bounds for one layer: magnitudes 2^n2 .. 2^n1 plus zero."""

    k: int
    n1: int
    n2: int
    codebook: tuple[float, ...] = field(default=())

    @property
    def levels(self) -> int:
        return self.n1 - self.n2 + 1


def prune_mask(w: WeightTensor, target_sparsity: float) -> WeightTensor:
    """Keep the ceil(target * N) largest |values|; deterministic tie order.

    target_sparsity is the fraction of *surviving* connections, matching
    the convention "final fraction of non-pruned connections".
    """
    if w.values.size == 0:
        raise CompressError("cannot prune an empty tensor")
    if not 0.0 < target_sparsity <= 1.0:
        raise CompressError("target sparsity must lie in (0, 1]")
    n = w.values.size
    keep = math.ceil(target_sparsity * n)
    flat = np.abs(w.values.ravel())
    # stable order: magnitude descending, index ascending on ties
    order = np.lexsort((np.arange(n), -flat))
    mask = np.zeros(n)
    mask[order[:keep]] = 1.0
    return WeightTensor(w.values.copy(), mask.reshape(w.values.shape))


def quant_bounds(w: WeightTensor, k: int = 5, narrow_codebook: bool = False) -> QuantSpec:
    """n1/n2 exponent bounds and codebook for the effective weights.

    The default lower bound is n2 = n1 + 1 - 2^(k-1)/2, giving 2^(k-1)/2
    magnitude levels (k=5 -> n2 = n1 - 7, sixteen signed values plus zero).
    narrow_codebook=True selects the variant n2 = n1 + 1 - 2^((k-1)/2),
    which shrinks the ladder to sqrt(2^(k-1)) levels and is only integral
    when k is odd.
    """
    eff = np.abs(w.effective())
    s = float(eff.max()) if eff.size else 0.0
    if s == 0.0:
        raise CompressError("all-zero tensor has no quantization bounds")
    n1 = int(math.floor(math.log2(4.0 * s / 3.0)))
    if narrow_codebook:
        exp = 2.0 ** ((k - 1) / 2)
        if exp != int(exp):
            raise CompressError(
                f"narrow n2 formula is non-integral for k={k}; "
                "use the corrected variant"
            )
        n2 = n1 + 1 - int(exp)
    else:
        n2 = n1 + 1 - (1 << (k - 1)) // 2
    mags = [2.0**e for e in range(n2, n1 + 1)]
    codebook = tuple(sorted([-m for m in mags] + [0.0] + mags))
    return QuantSpec(k=k, n1=n1, n2=n2, codebook=codebook)


def snap_pow2(x: float, n1: int, n2: int) -> float:
    """Nearest codebook element under arithmetic-midpoint binning."""
    mag = abs(x)
    if mag < 0.75 * 2.0**n2:
        return 0.0
    e = min(n1, math.floor(math.log2(mag * 4.0 / 3.0)))
    return math.copysign(2.0**e, x)


def quantize_to_pow2(w: WeightTensor, spec: QuantSpec, fraction: float = 1.0) -> WeightTensor:
    """Snap the `fraction` largest-magnitude surviving weights onto the codebook.

    Already-quantized weights are fixed points of the map, so repeated
    application at fraction 1.0 is idempotent.
    """
    if not 0.0 < fraction <= 1.0:
        raise CompressError("fraction must lie in (0, 1]")
    eff = w.effective()
    flat = eff.ravel()
    alive = np.nonzero(flat)[0]
    count = math.ceil(fraction * alive.size)
    order = np.lexsort((alive, -np.abs(flat[alive])))
    chosen = alive[order[:count]]
    out = w.values.copy().ravel()
    for i in chosen:
        out[i] = snap_pow2(flat[i], spec.n1, spec.n2)
    return WeightTensor(out.reshape(w.values.shape), w.mask.copy())


def is_monomial_encodable(values: np.ndarray, precision_bits: int) -> bool:
    """True when every nonzero entry is +-2^e with e + precision_bits >= 0."""
    for v in np.asarray(values).ravel():
        if v == 0.0:
            continue
        e = math.log2(abs(v))
        if abs(e - round(e)) > 1e-12 or round(e) + precision_bits < 0:
            return False
    return True


@dataclass(frozen=True)
class LayerSparsityRow:
    name: str
    total: int
    surviving: int
    fraction: float
    codebook_usage: dict
    monomial_encodable: bool


def sparsity_report(net, precision_bits: int = 15) -> list[LayerSparsityRow]:
    """Per-layer surviving counts, codebook histogram, fast-path eligibility."""
    from . import engine  # engine owns the layer types

    rows = []
    for i, layer in enumerate(net.layers):
        if not isinstance(layer, (engine.Conv2d, engine.Dense)):
            continue
        eff = layer.effective_weights()
        total = eff.size
        surviving = int(np.count_nonzero(eff))
        usage: dict = {}
        for v in eff.ravel():
            if v == 0.0:
                continue
            e = math.log2(abs(v))
            key = f"{'+' if v > 0 else '-'}2^{round(e)}" if abs(e - round(e)) < 1e-12 else "other"
            usage[key] = usage.get(key, 0) + 1
        rows.append(
            LayerSparsityRow(
                name=f"{type(layer).__name__.lower()}-{i}",
                total=total,
                surviving=surviving,
                fraction=surviving / max(1, total),
                codebook_usage=usage,
                monomial_encodable=is_monomial_encodable(eff, precision_bits),
            )
        )
    return rows
