"""Leveled FV encryption over the RNS ring: keys, encryption, arithmetic.

Plaintexts are polynomials over R_t (one lane per plaintext modulus t);
ciphertexts are RingPoly pairs mod the composite q.  Multiplication of
ciphertexts computes the exact integer tensor product in an auxiliary
extended RNS base, applies the floor(t/q * .) rescaling through a
multiprecision CRT reconstruction, and relinearizes the quadratic term
with base-beta decomposed evaluation keys.

The scale_exponent field threads the accumulated power-of-two fixed-point
scale through homomorphic circuits; it never influences the ring
arithmetic, only the final decode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import modmath as mm
from . import ring
from .ring import COEFF, RingContext, RingPoly

CT_MAGIC = 0x46434E5031000000
SERIAL_VERSION = 1
KIND_CIPHERTEXT = 0
KIND_SECRET_KEY = 1
KIND_PUBLIC_KEY = 2
KIND_EVAL_KEYS = 3

DEFAULT_SIGMA = 3.2          # truncated discrete Gaussian, cut at 6*sigma
DEFAULT_BETA = 1 << 32


class FVError(ValueError):
    """Parameter, lane, or scale mismatch in scheme operations."""


@dataclass(frozen=True)
class EncryptionParams:
    """Everything that pins down one instantiation of the scheme.

    q is the product of the limb primes; Delta = floor(q/t) per lane.
    The auxiliary base extends q far enough that the integer tensor
    product of two ciphertext polynomials is represented exactly.
    """

    n: int
    limb_primes: tuple[int, ...]
    t_lanes: tuple[int, ...]
    beta: int = DEFAULT_BETA
    noise_stddev: float = DEFAULT_SIGMA
    mul_depth_budget: int = 3

    def __post_init__(self):
        if self.n not in ring.SUPPORTED_DEGREES:
            raise FVError(f"ring degree {self.n} not in {ring.SUPPORTED_DEGREES}")
        if not self.t_lanes:
            raise FVError("at least one plaintext modulus lane is required")
        if self.beta & (self.beta - 1):
            raise FVError("decomposition base beta must be a power of two")
        q = math.prod(self.limb_primes)
        for t in self.t_lanes:
            if q // int(t) < (1 << 16):
                raise FVError(f"ciphertext modulus too small for lane t={t} (need q >> t)")

    @cached_property
    def ctx(self) -> RingContext:
        return RingContext.create(self.n, self.limb_primes)

    @cached_property
    def q(self) -> int:
        return math.prod(self.limb_primes)

    @cached_property
    def ell(self) -> int:
        # floor(log_beta q) in exact integer arithmetic
        e, power = 0, self.beta
        while power <= self.q:
            e += 1
            power *= self.beta
        return e

    def delta(self, lane: int) -> int:
        return self.q // int(self.t_lanes[lane])

    @cached_property
    def crt_weights(self) -> tuple[int, ...]:
        """Constants (q/q_i) * ((q/q_i)^-1 mod q_i), for CRT reconstruction."""
        out = []
        for p in self.limb_primes:
            m = self.q // p
            out.append(m * pow(m % p, p - 2, p))
        return tuple(out)

    @cached_property
    def aux_primes(self) -> tuple[int, ...]:
        # Extended base must exceed n * (q/2)^2 * 2 so centered tensor
        # coefficients reconstruct exactly.
        need_bits = self.n.bit_length() + self.q.bit_length() + 1
        count = need_bits // 54 + 1
        return tuple(
            mm.find_ntt_primes(self.n, count, bits=55, exclude=self.limb_primes)
        )

    @cached_property
    def ext_ctx(self) -> RingContext:
        return RingContext.create(self.n, self.limb_primes + self.aux_primes)

    @cached_property
    def ext_crt_weights(self) -> tuple[int, ...]:
        big_q = self.q * math.prod(self.aux_primes)
        out = []
        for p in self.limb_primes + self.aux_primes:
            m = big_q // p
            out.append(m * pow(m % p, p - 2, p))
        return tuple(out)

    @cached_property
    def ext_q(self) -> int:
        return self.q * math.prod(self.aux_primes)

    def describe(self) -> str:
        return (
            f"n={self.n}, log2(q)={math.log2(self.q):.1f} over {len(self.limb_primes)} limbs, "
            f"lanes={list(self.t_lanes)}, beta=2^{self.beta.bit_length() - 1}, ell={self.ell}"
        )


@dataclass(frozen=True)
class PlainPoly:
    """Plaintext polynomial over R_t, canonical coefficients, trailing zeros trimmed."""

    t: int
    coeffs: np.ndarray  # uint64, length <= n

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.uint64)
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else c[:0]
        object.__setattr__(self, "coeffs", c)
        if c.size and int(c.max()) >= self.t:
            raise FVError("plaintext coefficient out of range for modulus t")

    @staticmethod
    def zero(t: int) -> "PlainPoly":
        return PlainPoly(t, np.zeros(0, dtype=np.uint64))

    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.coeffs))

    def is_monomial(self) -> bool:
        return self.nnz == 1

    def centered(self) -> list[int]:
        """Signed representative of each coefficient in (-t/2, t/2]."""
        half = self.t // 2
        return [int(c) if int(c) <= half else int(c) - self.t for c in self.coeffs]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PlainPoly)
            and self.t == other.t
            and np.array_equal(self.coeffs, other.coeffs)
        )


@dataclass(frozen=True)
class SecretKey:
    s: RingPoly
    s_ntt: RingPoly = field(repr=False)


@dataclass(frozen=True)
class PublicKey:
    """p0 uniform, p1 = [-(s*p0 + e')]_q; NTT forms cached for encryption."""

    p0: RingPoly
    p1: RingPoly
    p0_ntt: RingPoly = field(repr=False)
    p1_ntt: RingPoly = field(repr=False)


@dataclass(frozen=True)
class EvalKeys:
    """Pairs (a_i, g_i) with g_i = [-(a_i s + e_i) + beta^i s^2]_q, i = 0..ell."""

    a: tuple[RingPoly, ...]
    g: tuple[RingPoly, ...]
    a_ntt: tuple[RingPoly, ...] = field(repr=False)
    g_ntt: tuple[RingPoly, ...] = field(repr=False)


@dataclass(frozen=True)
class Ciphertext:
    c0: RingPoly
    c1: RingPoly
    params: EncryptionParams
    lane: int = 0
    scale_exponent: int = 0
    mul_depth: int = 0

    @staticmethod
    def zero(params: EncryptionParams, lane: int = 0, scale_exponent: int = 0) -> "Ciphertext":
        """Transparent encryption of zero; used only to seed empty accumulations."""
        z = RingPoly.zero(params.ctx)
        return Ciphertext(z, z, params, lane, scale_exponent, 0)


# --- sampling -----------------------------------------------------------------


def _signed_to_ringpoly(ctx: RingContext, values: np.ndarray) -> RingPoly:
    rows = []
    v = values.astype(np.int64)
    for limb in ctx.limbs:
        rows.append(np.where(v < 0, limb.q + v, v).astype(np.uint64))
    return RingPoly(ctx, np.stack(rows), COEFF)


def sample_ternary(ctx: RingContext, rng: np.random.Generator) -> RingPoly:
    return _signed_to_ringpoly(ctx, rng.integers(-1, 2, ctx.n, dtype=np.int64))


def sample_gaussian(ctx: RingContext, rng: np.random.Generator, sigma: float) -> RingPoly:
    bound = int(math.floor(6 * sigma))
    e = np.rint(rng.normal(0.0, sigma, ctx.n)).astype(np.int64)
    return _signed_to_ringpoly(ctx, np.clip(e, -bound, bound))


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# --- key generation -----------------------------------------------------------


def keygen(params: EncryptionParams, seed) -> tuple[SecretKey, PublicKey, EvalKeys]:
    """Sample (sk, pk, ek); byte-deterministic for a fixed seed."""
    rng = _as_rng(seed)
    ctx = params.ctx

    s = sample_ternary(ctx, rng)
    s_ntt = ring.ntt_forward(s)

    p0 = RingPoly.random_uniform(ctx, rng)
    e_pk = sample_gaussian(ctx, rng, params.noise_stddev)
    p1 = ring.poly_neg(ring.poly_add(ring.poly_mul_ntt(p0, s_ntt), e_pk))

    s_sq = ring.poly_mul_ntt(s_ntt, s_ntt)
    a_list, g_list = [], []
    for i in range(params.ell + 1):
        a_i = RingPoly.random_uniform(ctx, rng)
        e_i = sample_gaussian(ctx, rng, params.noise_stddev)
        term = ring.scalar_mul(s_sq, pow(params.beta, i, params.q))
        g_i = ring.poly_add(
            ring.poly_neg(ring.poly_add(ring.poly_mul_ntt(a_i, s_ntt), e_i)), term
        )
        a_list.append(a_i)
        g_list.append(g_i)

    pk = PublicKey(p0, p1, ring.ntt_forward(p0), ring.ntt_forward(p1))
    ek = EvalKeys(
        tuple(a_list),
        tuple(g_list),
        tuple(ring.ntt_forward(a) for a in a_list),
        tuple(ring.ntt_forward(g) for g in g_list),
    )
    return SecretKey(s, s_ntt), pk, ek


# --- plaintext lifting --------------------------------------------------------


def _plain_to_ring(params: EncryptionParams, m: PlainPoly) -> RingPoly:
    """Centered lift of a plaintext into R_q (coefficient c -> c or c - t)."""
    if m.coeffs.size > params.n:
        raise FVError("plaintext degree exceeds ring degree")
    return RingPoly.from_int_coeffs(params.ctx, m.centered())


def _delta_m(params: EncryptionParams, m: PlainPoly, lane: int) -> RingPoly:
    return ring.scalar_mul(_plain_to_ring(params, m), params.delta(lane))


# --- encryption / decryption ---------------------------------------------------


def encrypt(
    pk: PublicKey,
    params: EncryptionParams,
    m: PlainPoly,
    lane: int = 0,
    scale_exponent: int = 0,
    rng=None,
) -> Ciphertext:
    """(c0, c1) = ([Delta*m + p1*u + e1]_q, [p0*u + e2]_q), fresh depth 0.

    p1 is the key half that hides s, so pairing it with the message term
    is what makes c0 + c1*s telescope to Delta*m + small noise.
    """
    if m.t != params.t_lanes[lane]:
        raise FVError(f"plaintext modulus {m.t} is not lane {lane}")
    rng = _as_rng(rng)
    u = sample_ternary(params.ctx, rng)
    u_ntt = ring.ntt_forward(u)
    e1 = sample_gaussian(params.ctx, rng, params.noise_stddev)
    e2 = sample_gaussian(params.ctx, rng, params.noise_stddev)
    c0 = ring.poly_add(ring.poly_add(_delta_m(params, m, lane), ring.poly_mul_ntt(pk.p1_ntt, u_ntt)), e1)
    c1 = ring.poly_add(ring.poly_mul_ntt(pk.p0_ntt, u_ntt), e2)
    return Ciphertext(c0, c1, params, lane, scale_exponent, 0)


def _crt_coeffs(params: EncryptionParams, p: RingPoly) -> list[int]:
    """Reconstruct canonical integer coefficients (< q) from RNS residues."""
    weights = params.crt_weights
    q = params.q
    cols = [p.data[i].tolist() for i in range(len(params.limb_primes))]
    return [sum(r * w for r, w in zip(res, weights)) % q for res in zip(*cols)]


def raw_decrypt_integers(sk: SecretKey, ct: Ciphertext) -> list[int]:
    """[c0 + c1*s]_q as canonical big-int coefficients."""
    w = ring.poly_add(ct.c0, ring.poly_mul_ntt(ct.c1, sk.s_ntt))
    return _crt_coeffs(ct.params, w)


def decrypt(sk: SecretKey, ct: Ciphertext, check_budget: bool = False) -> PlainPoly:
    """m = [round(t/q * [c0 + c1*s]_q)]_t via exact integer rounding.

    With check_budget=True, fewer than one bit of remaining noise budget
    raises instead of silently returning garbage (a fully swamped
    ciphertext measures just above zero, never negative).
    """
    params = ct.params
    t = int(params.t_lanes[ct.lane])
    q = params.q
    half_q = q >> 1
    ws = raw_decrypt_integers(sk, ct)
    coeffs = np.array([((w * t + half_q) // q) % t for w in ws], dtype=np.uint64)
    out = PlainPoly(t, coeffs)
    if check_budget and noise_budget(sk, ct) < 1.0:
        raise FVError("noise budget exhausted: decryption unreliable")
    return out


def noise_budget(sk: SecretKey, ct: Ciphertext) -> float:
    """Bits of headroom before noise corrupts decryption (0 = boundary).

    Measures the invariant residual [t * (c0 + c1*s)]_q, i.e. the noise
    ||[c0 + c1*s - Delta*m]_q|| expressed in units of the correctness
    threshold Delta/2, so the budget crosses 0 exactly when rounding
    starts to flip message coefficients.  Needs no knowledge of m: the
    scaling by t cancels the message term up to a small additive drift.
    """
    params = ct.params
    q = params.q
    half_q = q >> 1
    t = int(params.t_lanes[ct.lane])
    w = ring.poly_add(ct.c0, ring.poly_mul_ntt(ct.c1, sk.s_ntt))
    scaled = ring.scalar_mul(w, t)
    worst = 1
    for v in _crt_coeffs(params, scaled):
        if v > half_q:
            v = q - v
        if v > worst:
            worst = v
    return math.log2(q) - 1.0 - math.log2(worst)


# --- homomorphic operations ----------------------------------------------------


def _check_compat(a: Ciphertext, b: Ciphertext, require_scale: bool = True) -> None:
    if a.params is not b.params and a.params != b.params:
        raise FVError("ciphertext parameter mismatch")
    if a.lane != b.lane:
        raise FVError(f"lane mismatch: {a.lane} vs {b.lane}")
    if require_scale and a.scale_exponent != b.scale_exponent:
        raise FVError(
            f"scale mismatch: 2^{a.scale_exponent} vs 2^{b.scale_exponent}"
        )


def add_ct(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_compat(a, b)
    return Ciphertext(
        ring.poly_add(a.c0, b.c0),
        ring.poly_add(a.c1, b.c1),
        a.params,
        a.lane,
        a.scale_exponent,
        max(a.mul_depth, b.mul_depth),
    )


def sub_ct(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_compat(a, b)
    return Ciphertext(
        ring.poly_sub(a.c0, b.c0),
        ring.poly_sub(a.c1, b.c1),
        a.params,
        a.lane,
        a.scale_exponent,
        max(a.mul_depth, b.mul_depth),
    )


def add_pt(ct: Ciphertext, m: PlainPoly) -> Ciphertext:
    """(c0 + Delta*m, c1); plaintext must already sit at the ciphertext scale."""
    if m.t != ct.params.t_lanes[ct.lane]:
        raise FVError("plaintext modulus does not match ciphertext lane")
    if m.is_zero():
        return ct
    return Ciphertext(
        ring.poly_add(ct.c0, _delta_m(ct.params, m, ct.lane)),
        ct.c1,
        ct.params,
        ct.lane,
        ct.scale_exponent,
        ct.mul_depth,
    )


def is_monomial_plain(m: PlainPoly) -> bool:
    """True when the sparse O(n) multiplication path applies."""
    return m.is_monomial()


def mul_pt(ct: Ciphertext, m: PlainPoly, plain_scale_exponent: int = 0) -> Ciphertext:
    """(m*c0, m*c1) with automatic dispatch to the monomial fast path.

    The two paths are bit-identical; zero plaintexts are rejected because
    the pruning contract requires the caller to elide the operation.
    """
    if m.t != ct.params.t_lanes[ct.lane]:
        raise FVError("plaintext modulus does not match ciphertext lane")
    if m.is_zero():
        raise FVError("zero plaintext multiplier: elide the operation instead")
    if is_monomial_plain(m):
        k = int(np.nonzero(m.coeffs)[0][0])
        coeff = m.centered()[k]
        c0 = ring.poly_mul_monomial(ct.c0, k, coeff)
        c1 = ring.poly_mul_monomial(ct.c1, k, coeff)
    else:
        m_ntt = ring.ntt_forward(_plain_to_ring(ct.params, m))
        c0 = ring.poly_mul_ntt(ct.c0, m_ntt)
        c1 = ring.poly_mul_ntt(ct.c1, m_ntt)
    return Ciphertext(
        c0, c1, ct.params, ct.lane, ct.scale_exponent + plain_scale_exponent, ct.mul_depth
    )


def _to_extended(params: EncryptionParams, p: RingPoly) -> tuple[RingPoly, list[int]]:
    """Centered lift into the extended base; returns (ext poly, centered ints)."""
    half_q = params.q >> 1
    cents = [w - params.q if w > half_q else w for w in _crt_coeffs(params, p)]
    rows = list(p.data)  # residues mod q_i are unchanged by adding multiples of q
    for ap in params.aux_primes:
        rows.append(np.array([c % ap for c in cents], dtype=np.uint64))
    return RingPoly(params.ext_ctx, np.stack(rows), COEFF), cents


def _ext_crt(params: EncryptionParams, p: RingPoly) -> list[int]:
    """Centered big-int coefficients of an extended-base polynomial."""
    big_q = params.ext_q
    half = big_q >> 1
    weights = params.ext_crt_weights
    cols = [p.data[i].tolist() for i in range(p.data.shape[0])]
    out = []
    for res in zip(*cols):
        w = sum(r * c for r, c in zip(res, weights)) % big_q
        out.append(w - big_q if w > half else w)
    return out


def _rescale_to_q(params: EncryptionParams, tensor: RingPoly, t: int) -> list[int]:
    """Exact round(t/q * .) of an extended-base tensor poly, canonical mod q."""
    q = params.q
    half_q = q >> 1
    return [((c * t + half_q) // q) % q for c in _ext_crt(params, tensor)]


def _ints_to_ringpoly(ctx: RingContext, values: list[int]) -> RingPoly:
    rows = [np.array([v % limb.q for v in values], dtype=np.uint64) for limb in ctx.limbs]
    return RingPoly(ctx, np.stack(rows), COEFF)


def mul_ct(a: Ciphertext, b: Ciphertext, ek: EvalKeys) -> Ciphertext:
    """Tensor, rescale, relinearize; scales add and depth advances by one."""
    _check_compat(a, b, require_scale=False)
    params = a.params
    t = int(params.t_lanes[a.lane])

    ea0, _ = _to_extended(params, a.c0)
    ea1, _ = _to_extended(params, a.c1)
    eb0, _ = _to_extended(params, b.c0)
    eb1, _ = _to_extended(params, b.c1)
    fa0, fa1 = ring.ntt_forward(ea0), ring.ntt_forward(ea1)
    fb0, fb1 = ring.ntt_forward(eb0), ring.ntt_forward(eb1)

    t0 = ring.ntt_inverse(ring.pointwise_mul(fa0, fb0))
    t1 = ring.ntt_inverse(
        ring.poly_add(ring.pointwise_mul(fa0, fb1), ring.pointwise_mul(fa1, fb0))
    )
    t2 = ring.ntt_inverse(ring.pointwise_mul(fa1, fb1))

    c0_ints = _rescale_to_q(params, t0, t)
    c1_ints = _rescale_to_q(params, t1, t)
    c2_ints = _rescale_to_q(params, t2, t)

    c0 = _ints_to_ringpoly(params.ctx, c0_ints)
    c1 = _ints_to_ringpoly(params.ctx, c1_ints)

    # base-beta decomposition of c2', folded in through the eval keys
    shift = params.beta.bit_length() - 1
    mask = params.beta - 1
    r0_acc = None
    r1_acc = None
    for i in range(params.ell + 1):
        digit = [(c >> (shift * i)) & mask for c in c2_ints]
        if not any(digit):
            continue
        d_ntt = ring.ntt_forward(_ints_to_ringpoly(params.ctx, digit))
        g_term = ring.pointwise_mul(ek.g_ntt[i], d_ntt)
        a_term = ring.pointwise_mul(ek.a_ntt[i], d_ntt)
        r0_acc = g_term if r0_acc is None else ring.poly_add(r0_acc, g_term)
        r1_acc = a_term if r1_acc is None else ring.poly_add(r1_acc, a_term)
    if r0_acc is not None:
        c0 = ring.poly_add(c0, ring.ntt_inverse(r0_acc))
        c1 = ring.poly_add(c1, ring.ntt_inverse(r1_acc))

    return Ciphertext(
        c0,
        c1,
        params,
        a.lane,
        a.scale_exponent + b.scale_exponent,
        max(a.mul_depth, b.mul_depth) + 1,
    )


# --- serialization --------------------------------------------------------------


def _header(params: EncryptionParams, kind: int, lane: int, scale_exponent: int, depth: int) -> bytes:
    # Word 7 is reserved-zero for ciphertexts; key files place their kind
    # code there so a loader can refuse the wrong species of key.
    words = np.array(
        [
            CT_MAGIC,
            SERIAL_VERSION,
            params.n,
            len(params.limb_primes),
            lane,
            scale_exponent & 0xFFFFFFFFFFFFFFFF,
            depth,
            kind,
        ],
        dtype=np.uint64,
    )
    return words.astype("<u8").tobytes()


def _parse_header(data: bytes, params: EncryptionParams, expect_kind: int) -> tuple[int, int, int]:
    if len(data) < 64:
        raise FVError("truncated serialization header")
    w = np.frombuffer(data[:64], dtype="<u8").astype(np.uint64)
    if int(w[0]) != CT_MAGIC:
        raise FVError("bad magic word in serialized object")
    if int(w[1]) != SERIAL_VERSION:
        raise FVError(f"unsupported serialization version {int(w[1])}")
    if int(w[2]) != params.n or int(w[3]) != len(params.limb_primes):
        raise FVError("serialized object does not match the supplied parameters")
    kind = int(w[7])
    if kind != expect_kind:
        names = {0: "ciphertext", 1: "secret key", 2: "public key", 3: "eval keys"}
        raise FVError(
            f"refusing to load: file holds a {names.get(kind, '?')}, "
            f"expected {names.get(expect_kind, '?')}"
        )
    scale = int(w[5])
    if scale >= 1 << 63:
        scale -= 1 << 64
    return int(w[4]), scale, int(w[6])


def _poly_bytes(p: RingPoly) -> bytes:
    return p.data.astype("<u8").tobytes()


def _poly_from(buf: bytes, offset: int, ctx: RingContext) -> tuple[RingPoly, int]:
    count = len(ctx.limbs) * ctx.n
    end = offset + count * 8
    if end > len(buf):
        raise FVError("truncated polynomial block")
    arr = np.frombuffer(buf[offset:end], dtype="<u8").astype(np.uint64)
    return RingPoly(ctx, arr.reshape(len(ctx.limbs), ctx.n), COEFF), end


def ciphertext_to_bytes(ct: Ciphertext) -> bytes:
    """8 header words then c0 then c1, limb-major u64 little-endian.

    At n=8192 with 4 limbs this is exactly 8 + 2*4*8192 = 65,544 words.
    """
    return (
        _header(ct.params, KIND_CIPHERTEXT, ct.lane, ct.scale_exponent, ct.mul_depth)
        + _poly_bytes(ct.c0)
        + _poly_bytes(ct.c1)
    )


def ciphertext_from_bytes(data: bytes, params: EncryptionParams) -> Ciphertext:
    lane, scale, depth = _parse_header(data, params, KIND_CIPHERTEXT)
    c0, off = _poly_from(data, 64, params.ctx)
    c1, off = _poly_from(data, off, params.ctx)
    if off != len(data):
        raise FVError("trailing bytes after ciphertext payload")
    return Ciphertext(c0, c1, params, lane, scale, depth)


def ciphertext_num_words(params: EncryptionParams) -> int:
    return 8 + 2 * len(params.limb_primes) * params.n


def secret_key_to_bytes(sk: SecretKey, params: EncryptionParams) -> bytes:
    return _header(params, KIND_SECRET_KEY, 0, 0, 0) + _poly_bytes(sk.s)


def secret_key_from_bytes(data: bytes, params: EncryptionParams) -> SecretKey:
    _parse_header(data, params, KIND_SECRET_KEY)
    s, off = _poly_from(data, 64, params.ctx)
    if off != len(data):
        raise FVError("trailing bytes after secret key payload")
    return SecretKey(s, ring.ntt_forward(s))


def public_key_to_bytes(pk: PublicKey, params: EncryptionParams) -> bytes:
    return _header(params, KIND_PUBLIC_KEY, 0, 0, 0) + _poly_bytes(pk.p0) + _poly_bytes(pk.p1)


def public_key_from_bytes(data: bytes, params: EncryptionParams) -> PublicKey:
    _parse_header(data, params, KIND_PUBLIC_KEY)
    p0, off = _poly_from(data, 64, params.ctx)
    p1, off = _poly_from(data, off, params.ctx)
    if off != len(data):
        raise FVError("trailing bytes after public key payload")
    return PublicKey(p0, p1, ring.ntt_forward(p0), ring.ntt_forward(p1))


def eval_keys_to_bytes(ek: EvalKeys, params: EncryptionParams) -> bytes:
    blob = _header(params, KIND_EVAL_KEYS, 0, 0, params.ell)
    for a_i, g_i in zip(ek.a, ek.g):
        blob += _poly_bytes(a_i) + _poly_bytes(g_i)
    return blob


def eval_keys_from_bytes(data: bytes, params: EncryptionParams) -> EvalKeys:
    _, _, ell = _parse_header(data, params, KIND_EVAL_KEYS)
    if ell != params.ell:
        raise FVError("eval key count does not match parameters")
    a_list, g_list = [], []
    off = 64
    for _ in range(ell + 1):
        a_i, off = _poly_from(data, off, params.ctx)
        g_i, off = _poly_from(data, off, params.ctx)
        a_list.append(a_i)
        g_list.append(g_i)
    if off != len(data):
        raise FVError("trailing bytes after eval key payload")
    return EvalKeys(
        tuple(a_list),
        tuple(g_list),
        tuple(ring.ntt_forward(p) for p in a_list),
        tuple(ring.ntt_forward(p) for p in g_list),
    )
