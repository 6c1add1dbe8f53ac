"""Exact arithmetic in the negacyclic ring Z_q[x]/(x^n + 1), RNS limb form.

A ring element is stored as one uint64 coefficient row per prime limb
(canonical residues < q_i).  Multiplication comes in three flavours:

* `poly_mul_ntt`   - O(n log n) per limb via the negacyclic NTT,
* `poly_mul_naive` - O(n^2) schoolbook, the correctness oracle,
* `poly_mul_monomial` - O(n) fast path for single-term multipliers.

The NTT is the iterative in-place radix-2 form with twiddle tables stored
in bit-reversed order and Shoup precomputation per twiddle; forward output
is in bit-reversed order, which the pointwise product and the inverse
transform both consume, so callers never observe the permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import modmath as mm

SUPPORTED_DEGREES = (1024, 2048, 4096, 8192, 16384, 32768)


class RingError(ValueError):
    """Domain or parameter mismatch between ring operands."""


@dataclass(frozen=True)
class ModulusLimb:
    """One RNS prime q_i with its cached NTT tables for degree n.

    Invariants: q_i prime, q_i ≡ 1 (mod 2n), root^(2n) ≡ 1 and
    root^n ≡ -1 (mod q_i).
    """

    q: int
    n: int
    root: int
    psis: np.ndarray = field(repr=False)        # psi^bitrev(i), CT order
    psis_quot: np.ndarray = field(repr=False)
    ipsis: np.ndarray = field(repr=False)       # psi^-bitrev(i), GS order
    ipsis_quot: np.ndarray = field(repr=False)
    n_inv: np.uint64 = field(repr=False)
    n_inv_quot: np.uint64 = field(repr=False)
    r64: np.uint64 = field(repr=False)          # 2^64 mod q, folds 128-bit products
    r64_quot: np.uint64 = field(repr=False)

    @property
    def qv(self) -> np.uint64:
        return np.uint64(self.q)

    @staticmethod
    def create(q: int, n: int) -> "ModulusLimb":
        if n & (n - 1) or n < 4:
            raise RingError(f"ring degree {n} is not a power of two")
        if not mm.is_prime_u64(q):
            raise RingError(f"limb modulus {q} is not prime")
        if (q - 1) % (2 * n) != 0:
            raise RingError(f"limb modulus {q} is not ≡ 1 (mod {2 * n})")
        return _build_limb(q, n)


@lru_cache(maxsize=64)
def _build_limb(q: int, n: int) -> ModulusLimb:
    root = mm.primitive_2n_root(q, n)
    root_inv = pow(root, q - 2, q)
    bits = n.bit_length() - 1
    pw = 1
    powers = []
    for _ in range(n):
        powers.append(pw)
        pw = pw * root % q
    ipw = 1
    ipowers = []
    for _ in range(n):
        ipowers.append(ipw)
        ipw = ipw * root_inv % q
    order = [mm.bit_reverse(i, bits) for i in range(n)]
    psis = np.array([powers[j] for j in order], dtype=np.uint64)
    ipsis = np.array([ipowers[j] for j in order], dtype=np.uint64)
    psis_quot = np.array([(int(x) << 64) // q for x in psis], dtype=np.uint64)
    ipsis_quot = np.array([(int(x) << 64) // q for x in ipsis], dtype=np.uint64)
    n_inv = pow(n, q - 2, q)
    r64 = (1 << 64) % q
    return ModulusLimb(
        q=q,
        n=n,
        root=root,
        psis=psis,
        psis_quot=psis_quot,
        ipsis=ipsis,
        ipsis_quot=ipsis_quot,
        n_inv=np.uint64(n_inv),
        n_inv_quot=mm.shoup_quotient(n_inv, q),
        r64=np.uint64(r64),
        r64_quot=mm.shoup_quotient(r64, q),
    )


@dataclass(frozen=True)
class RingContext:
    """Shared limb set for one parameter choice; safe to share read-only."""

    n: int
    limbs: tuple[ModulusLimb, ...]

    @staticmethod
    def create(n: int, primes: tuple[int, ...] | list[int]) -> "RingContext":
        return RingContext(n=n, limbs=tuple(ModulusLimb.create(int(q), n) for q in primes))

    @property
    def primes(self) -> tuple[int, ...]:
        return tuple(l.q for l in self.limbs)

    @property
    def modulus(self) -> int:
        """The composite modulus q = prod q_i as a python int."""
        q = 1
        for l in self.limbs:
            q *= l.q
        return q


COEFF = "coeff"
NTT = "ntt"


@dataclass(frozen=True)
class RingPoly:
    """Element of R_q in RNS form: data[i] holds the mod-q_i coefficients.

    Treated as immutable; every operation returns a fresh polynomial.
    """

    ctx: RingContext
    data: np.ndarray  # shape (len(limbs), n), uint64, canonical residues
    domain: str = COEFF

    def __post_init__(self):
        if self.data.shape != (len(self.ctx.limbs), self.ctx.n):
            raise RingError(
                f"coefficient block {self.data.shape} does not match "
                f"({len(self.ctx.limbs)}, {self.ctx.n})"
            )
        if self.data.dtype != np.uint64:
            raise RingError("coefficients must be uint64")

    @staticmethod
    def zero(ctx: RingContext, domain: str = COEFF) -> "RingPoly":
        return RingPoly(ctx, np.zeros((len(ctx.limbs), ctx.n), dtype=np.uint64), domain)

    @staticmethod
    def from_int_coeffs(ctx: RingContext, coeffs) -> "RingPoly":
        """Build from signed python-int coefficients (reduced per limb)."""
        coeffs = list(coeffs)
        if len(coeffs) > ctx.n:
            raise RingError(f"{len(coeffs)} coefficients exceed degree {ctx.n}")
        rows = []
        for limb in ctx.limbs:
            row = np.zeros(ctx.n, dtype=np.uint64)
            for i, c in enumerate(coeffs):
                row[i] = c % limb.q
            rows.append(row)
        return RingPoly(ctx, np.stack(rows), COEFF)

    @staticmethod
    def random_uniform(ctx: RingContext, rng: np.random.Generator) -> "RingPoly":
        rows = [
            rng.integers(0, limb.q, ctx.n, dtype=np.uint64) for limb in ctx.limbs
        ]
        return RingPoly(ctx, np.stack(rows), COEFF)

    def is_zero(self) -> bool:
        return not self.data.any()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RingPoly)
            and self.domain == other.domain
            and self.ctx.primes == other.ctx.primes
            and np.array_equal(self.data, other.data)
        )


def _check_pair(a: RingPoly, b: RingPoly, same_domain: bool = True) -> None:
    if a.ctx.n != b.ctx.n or a.ctx.primes != b.ctx.primes:
        raise RingError("ring parameter mismatch between operands")
    if same_domain and a.domain != b.domain:
        raise RingError(f"domain mismatch: {a.domain} vs {b.domain}")


# --- transforms ---------------------------------------------------------------


def _ntt_limb_forward(row: np.ndarray, limb: ModulusLimb) -> np.ndarray:
    a = row.copy()
    q = limb.qv
    n = limb.n
    t = n
    m = 1
    while m < n:
        t >>= 1
        w = limb.psis[m : 2 * m][:, None]
        wq = limb.psis_quot[m : 2 * m][:, None]
        blocks = a.reshape(m, 2, t)
        u = blocks[:, 0, :]
        v = mm.mul_shoup(blocks[:, 1, :], w, wq, q)
        s = u + v
        d = u + q - v
        blocks[:, 0, :] = np.where(s >= q, s - q, s)
        blocks[:, 1, :] = np.where(d >= q, d - q, d)
        m <<= 1
    return a


def _ntt_limb_inverse(row: np.ndarray, limb: ModulusLimb) -> np.ndarray:
    a = row.copy()
    q = limb.qv
    n = limb.n
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        w = limb.ipsis[h:m][:, None]
        wq = limb.ipsis_quot[h:m][:, None]
        blocks = a.reshape(h, 2, t)
        u = blocks[:, 0, :]
        v = blocks[:, 1, :]
        s = u + v
        d = u + q - v
        blocks[:, 0, :] = np.where(s >= q, s - q, s)
        blocks[:, 1, :] = mm.mul_shoup(np.where(d >= q, d - q, d), w, wq, q)
        t <<= 1
        m = h
    return mm.mul_shoup(a, limb.n_inv, limb.n_inv_quot, q)


def ntt_forward(p: RingPoly) -> RingPoly:
    """Negacyclic NTT per limb; Coefficient -> NTT domain."""
    if p.domain != COEFF:
        raise RingError("ntt_forward expects a Coefficient-domain polynomial")
    rows = [_ntt_limb_forward(p.data[i], limb) for i, limb in enumerate(p.ctx.limbs)]
    return RingPoly(p.ctx, np.stack(rows), NTT)


def ntt_inverse(p: RingPoly) -> RingPoly:
    """Inverse transform; NTT -> Coefficient domain, exact round trip."""
    if p.domain != NTT:
        raise RingError("ntt_inverse expects an NTT-domain polynomial")
    rows = [_ntt_limb_inverse(p.data[i], limb) for i, limb in enumerate(p.ctx.limbs)]
    return RingPoly(p.ctx, np.stack(rows), COEFF)


# --- arithmetic ---------------------------------------------------------------


def poly_add(a: RingPoly, b: RingPoly) -> RingPoly:
    _check_pair(a, b)
    rows = [
        mm.add_mod(a.data[i], b.data[i], limb.qv) for i, limb in enumerate(a.ctx.limbs)
    ]
    return RingPoly(a.ctx, np.stack(rows), a.domain)


def poly_sub(a: RingPoly, b: RingPoly) -> RingPoly:
    _check_pair(a, b)
    rows = [
        mm.sub_mod(a.data[i], b.data[i], limb.qv) for i, limb in enumerate(a.ctx.limbs)
    ]
    return RingPoly(a.ctx, np.stack(rows), a.domain)


def poly_neg(a: RingPoly) -> RingPoly:
    rows = [mm.neg_mod(a.data[i], limb.qv) for i, limb in enumerate(a.ctx.limbs)]
    return RingPoly(a.ctx, np.stack(rows), a.domain)


def scalar_mul(a: RingPoly, c: int) -> RingPoly:
    """Multiply by a python integer (reduced per limb); domain-preserving."""
    rows = []
    for i, limb in enumerate(a.ctx.limbs):
        w = c % limb.q
        rows.append(mm.mul_shoup(a.data[i], np.uint64(w), mm.shoup_quotient(w, limb.q), limb.qv))
    return RingPoly(a.ctx, np.stack(rows), a.domain)


def pointwise_mul(a: RingPoly, b: RingPoly) -> RingPoly:
    """Hadamard product of two NTT-domain polynomials."""
    _check_pair(a, b)
    if a.domain != NTT:
        raise RingError("pointwise_mul expects NTT-domain operands")
    rows = [
        mm.mul_mod(a.data[i], b.data[i], limb.qv, limb.r64, limb.r64_quot)
        for i, limb in enumerate(a.ctx.limbs)
    ]
    return RingPoly(a.ctx, np.stack(rows), NTT)


def poly_mul_ntt(a: RingPoly, b: RingPoly) -> RingPoly:
    """Negacyclic product via the NTT; accepts either domain, returns Coefficient."""
    _check_pair(a, b, same_domain=False)
    fa = a if a.domain == NTT else ntt_forward(a)
    fb = b if b.domain == NTT else ntt_forward(b)
    return ntt_inverse(pointwise_mul(fa, fb))


def poly_mul_naive(a: RingPoly, b: RingPoly) -> RingPoly:
    """Schoolbook negacyclic product; the independent O(n^2) oracle.

    Exact big-integer accumulation per limb with a single final reduction,
    deliberately sharing no modular kernels with the NTT path.
    """
    _check_pair(a, b)
    if a.domain != COEFF:
        raise RingError("poly_mul_naive expects Coefficient-domain operands")
    n = a.ctx.n
    rows = []
    for i, limb in enumerate(a.ctx.limbs):
        av = a.data[i].tolist()
        bv = b.data[i].tolist()
        acc = [0] * n
        for j, aj in enumerate(av):
            if aj == 0:
                continue
            for k, bk in enumerate(bv):
                idx = j + k
                if idx >= n:
                    acc[idx - n] -= aj * bk
                else:
                    acc[idx] += aj * bk
        rows.append(np.array([v % limb.q for v in acc], dtype=np.uint64))
    return RingPoly(a.ctx, np.stack(rows), COEFF)


def poly_mul_monomial(c: RingPoly, k: int, coeff: int) -> RingPoly:
    """Multiply by the monomial coeff * x^k in O(n) per limb.

    coeff is a (possibly negative) python integer, reduced per limb, so a
    centered plaintext lift can be passed straight through.  Wrapped
    positions pick up the x^n ≡ -1 sign, i.e. target index j - n with the
    negated coefficient.
    """
    if not 0 <= k < c.ctx.n:
        raise RingError(f"monomial exponent {k} out of [0, {c.ctx.n})")
    if c.domain != COEFF:
        raise RingError("poly_mul_monomial expects a Coefficient-domain polynomial")
    n = c.ctx.n
    rows = []
    for i, limb in enumerate(c.ctx.limbs):
        w = coeff % limb.q
        scaled = mm.mul_shoup(c.data[i], np.uint64(w), mm.shoup_quotient(w, limb.q), limb.qv)
        if k == 0:
            rows.append(scaled)
        else:
            wrapped = mm.neg_mod(scaled[n - k :], limb.qv)
            rows.append(np.concatenate([wrapped, scaled[: n - k]]))
    return RingPoly(c.ctx, np.stack(rows), COEFF)
