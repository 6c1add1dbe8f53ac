"""Fixed-point reals <-> plaintext polynomials, and the capacity estimator.

The base-2 integer encoder writes the binary expansion of |z| into the
plaintext polynomial: bit i of a non-negative z contributes coefficient 1
at x^i, bits of a negative z contribute t-1 (i.e. -1 mod t).  Decoding is
evaluation at x = 2 under the centered-coefficient interpretation, so the
map is a ring homomorphism: sums and products of encodings decode to sums
and products of values, which is what lets whole circuits run under
encryption.

Reals are scaled by 2^precision_bits before encoding; the exponent is
tracked per ciphertext and divided out after decryption.  Multi-lane
configurations encrypt the same integer under several plaintext moduli and
recombine coefficients by CRT at decode time, which is what gives the
plaintext space enough headroom for deep circuits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fv import PlainPoly


class EncodeError(ValueError):
    pass


class CapacityError(EncodeError):
    """Worst-case plaintext coefficient growth exceeds the CRT capacity."""


@dataclass(frozen=True)
class FixedPointConfig:
    t_lanes: tuple[int, ...]
    precision_bits: int = 15

    def __post_init__(self):
        if self.precision_bits < 1:
            raise EncodeError("precision_bits must be >= 1")
        if not self.t_lanes:
            raise EncodeError("at least one plaintext lane required")
        for i, a in enumerate(self.t_lanes):
            for b in self.t_lanes[i + 1 :]:
                if math.gcd(int(a), int(b)) != 1:
                    raise EncodeError("plaintext lanes must be pairwise coprime")

    @property
    def lane_product(self) -> int:
        return math.prod(int(t) for t in self.t_lanes)


@dataclass(frozen=True)
class EncodedValue:
    """One fixed-point value as a plaintext polynomial per lane."""

    polys: tuple[PlainPoly, ...]
    scale_exponent: int


def encode_integer(z: int, t: int) -> PlainPoly:
    """Binary expansion of |z|; set bits carry 1 (z >= 0) or t-1 (z < 0)."""
    z = int(z)
    mag = abs(z)
    if mag == 0:
        return PlainPoly.zero(t)
    bit = 1 if z > 0 else t - 1
    coeffs = np.zeros(mag.bit_length(), dtype=np.uint64)
    i = 0
    while mag:
        if mag & 1:
            coeffs[i] = bit
        mag >>= 1
        i += 1
    return PlainPoly(t, coeffs)


def decode_integer(p: PlainPoly) -> int:
    """Evaluate at x = 2 with centered coefficients; inverse of encode_integer.

    Raises on magnitudes beyond 62 bits; that is the supported contract
    for scalar round trips (whole-circuit outputs go through decode_fixed,
    which has no such cap).
    """
    value = 0
    for i, c in enumerate(p.centered()):
        value += c << i
    if abs(value) >= 1 << 62:
        raise EncodeError(f"decoded magnitude {value} exceeds 62-bit contract")
    return value


def round_half_away(v: float) -> int:
    """Round to nearest with halves away from zero, so +-2^k scale exactly."""
    return int(math.floor(v + 0.5)) if v >= 0 else -int(math.floor(-v + 0.5))


def encode_fixed(v: float, cfg: FixedPointConfig) -> EncodedValue:
    z = round_half_away(float(v) * (1 << cfg.precision_bits))
    if abs(z) >= 1 << 62:
        raise EncodeError("value too large for fixed-point range")
    return EncodedValue(
        tuple(encode_integer(z, int(t)) for t in cfg.t_lanes), cfg.precision_bits
    )


def crt_combine(residues: list[int], moduli: list[int]) -> int:
    """Centered CRT representative in (-prod/2, prod/2]."""
    prod = math.prod(moduli)
    acc = 0
    for r, m in zip(residues, moduli):
        q = prod // m
        acc += r * q * pow(q % m, m - 2, m)
    acc %= prod
    return acc - prod if acc > prod // 2 else acc


def decode_fixed(
    plains, scale_exponent: int, cfg: FixedPointConfig, scale_factor: int = 1
) -> float:
    """CRT-recombine per-lane plaintexts coefficient-wise, evaluate, descale.

    The coefficient-wise recombination matters: individual coefficients stay
    inside the lane product while the evaluated value may be astronomically
    larger, so evaluating first and recombining after would overflow.
    A reconstructed coefficient near the lane-product ceiling signals a
    corrupted transcript and raises.
    """
    plains = list(plains)
    if len(plains) != len(cfg.t_lanes):
        raise EncodeError(
            f"expected {len(cfg.t_lanes)} lane plaintexts, got {len(plains)}"
        )
    for p, t in zip(plains, cfg.t_lanes):
        if p.t != int(t):
            raise EncodeError("lane plaintext modulus out of order")
    moduli = [int(t) for t in cfg.t_lanes]
    length = max((p.coeffs.size for p in plains), default=0)
    tripwire = cfg.lane_product >> 2
    value = 0
    for i in range(length):
        if len(moduli) == 1:
            p = plains[0]
            c = p.centered()[i] if i < p.coeffs.size else 0
        else:
            res = [
                int(p.coeffs[i]) if i < p.coeffs.size else 0 for p in plains
            ]
            c = crt_combine(res, moduli)
            if abs(c) > tripwire:
                raise EncodeError(
                    f"coefficient {i} reconstructs near capacity ({c}); "
                    "lane residues are inconsistent or the circuit overflowed"
                )
        value += c << i if c >= 0 else -((-c) << i)
    return value / (2.0**scale_exponent) / scale_factor


# --- capacity estimation --------------------------------------------------------


@dataclass(frozen=True)
class CapacityReport:
    scale_exponent: int
    scale_factor: int
    coeff_bound: int
    degree_bound: int
    capacity: int

    @property
    def ok(self) -> bool:
        return 2 * self.coeff_bound < self.capacity

    @property
    def headroom_bits(self) -> float:
        if self.coeff_bound == 0:
            return float(self.capacity.bit_length())
        return math.log2(self.capacity) - 1 - math.log2(self.coeff_bound)


def _popcount(z: int) -> int:
    return bin(abs(int(z))).count("1")


def _bits(z: int) -> int:
    return abs(int(z)).bit_length()


def capacity_check(
    net, cfg: FixedPointConfig, input_bound: float = 1.0, ring_degree: int | None = None
) -> CapacityReport:
    """Worst-case plaintext coefficient and degree growth through a network.

    Walks the same compiled integer plan the encrypted evaluator executes,
    tracking a bound C on the largest plaintext coefficient and D on the
    polynomial degree per tensor element.  Products obey
    ||p*q||_inf <= min(terms(p), terms(q)) * ||p||_inf * ||q||_inf and sums
    add, so binary-encoded weights contribute their popcount.  Raises
    CapacityError when 2C reaches the centered CRT capacity (fix: add a
    plaintext lane or reduce precision_bits).
    """
    from . import engine  # local import; engine depends on this module

    compiled = engine.compile_network(net, cfg)
    prec = cfg.precision_bits
    z_in = round_half_away(abs(input_bound) * (1 << prec))

    # State per tensor element: C bounds the largest coefficient magnitude,
    # D the degree, T the nonzero-term count.  Tracking T separately is
    # what keeps monomial (power-of-two) weights cheap: they never grow it.
    coeff = 1
    degree = max(1, _bits(z_in) - 1)
    terms = max(1, _popcount(z_in))

    def product(state_a, state_b):
        c_a, d_a, t_a = state_a
        c_b, d_b, t_b = state_b
        d = d_a + d_b
        return c_a * c_b * min(t_a, t_b), d, min(t_a * t_b, d + 1)

    def int_state(z: int):
        return (1, _bits(z) - 1, _popcount(z))

    for plan in compiled.plans:
        if isinstance(plan, engine.LinearPlan):
            worst = (1, degree, 1)
            for out in plan.outputs:
                acc = (0, degree, 0)
                for tap in out.taps:
                    tc, td, tt = product((coeff, degree, terms), int_state(tap.weight_int))
                    acc = (acc[0] + tc, max(acc[1], td), acc[2] + tt)
                if out.bias_int is not None:
                    acc = (
                        acc[0] + 1,
                        max(acc[1], _bits(out.bias_int) - 1),
                        acc[2] + _popcount(out.bias_int),
                    )
                worst = tuple(max(a, b) for a, b in zip(worst, acc))
            coeff, degree = worst[0], worst[1]
            terms = min(worst[2], degree + 1)
        elif isinstance(plan, engine.PoolPlan):
            fan = max(len(idxs) for idxs in plan.outputs)
            coeff *= fan
            terms = min(terms * fan, degree + 1)
            if plan.reciprocal_int is not None:
                coeff, degree, terms = product(
                    (coeff, degree, terms), int_state(plan.reciprocal_int)
                )
        elif isinstance(plan, engine.ActPlan):
            x_state = (coeff, degree, terms)
            sq = product(x_state, x_state)
            if plan.a2_int is not None:
                sq = product(sq, int_state(plan.a2_int))
            new_c, new_d, new_t = sq
            if plan.a1_mult_int is not None:
                lc, ld, lt = product(x_state, int_state(plan.a1_mult_int))
                new_c += lc
                new_d = max(new_d, ld)
                new_t += lt
            if plan.a0_add_int is not None:
                new_c += 1
                new_d = max(new_d, _bits(plan.a0_add_int) - 1)
                new_t += _popcount(plan.a0_add_int)
            coeff, degree = new_c, new_d
            terms = min(new_t, degree + 1)
        if ring_degree is not None and degree >= ring_degree:
            raise CapacityError(
                f"plaintext degree bound {degree} reaches ring degree {ring_degree}"
            )

    report = CapacityReport(
        compiled.out_scale, compiled.out_factor, coeff, degree, cfg.lane_product
    )
    if not report.ok:
        raise CapacityError(
            f"worst-case coefficient needs {coeff.bit_length()} bits but the "
            f"centered CRT capacity is {cfg.lane_product.bit_length()} bits: "
            "add a plaintext lane or reduce precision_bits"
        )
    return report
