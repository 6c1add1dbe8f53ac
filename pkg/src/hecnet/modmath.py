"""Vectorized modular arithmetic kernels for word-sized prime moduli.

All heavy arithmetic in this project runs on numpy uint64 arrays whose
values stay below ~56-bit primes.  Products of two such values do not fit
in a 64-bit word, so the kernels here emulate the 128-bit intermediate via
32-bit half-word splits.  Two reduction strategies are used:

* Shoup multiplication for products with a *fixed* operand (NTT twiddles,
  cached constants): one precomputed quotient word per constant, one
  conditional correction.
* A generic product reduction that splits the 128-bit product as
  hi * 2**64 + lo and folds the high word through the constant
  2**64 mod q.

Also hosts the number-theoretic utilities needed to build parameter sets:
deterministic Miller-Rabin for 64-bit inputs, NTT-friendly prime search,
and primitive 2n-th root location.
"""

from __future__ import annotations

import numpy as np

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# Silence expected wraparound in uint64 products; every wrap below is intentional.
_WRAP = {"over": "ignore"}


def mul_hi(a: np.ndarray, b) -> np.ndarray:
    """High 64 bits of the 128-bit product a*b (elementwise)."""
    with np.errstate(**_WRAP):
        a_lo = a & _M32
        a_hi = a >> _S32
        b_lo = b & _M32
        b_hi = b >> _S32
        ll = a_lo * b_lo
        lh = a_lo * b_hi
        hl = a_hi * b_lo
        mid = (ll >> _S32) + (lh & _M32) + (hl & _M32)
        return a_hi * b_hi + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)


def shoup_quotient(w: int, q: int) -> np.uint64:
    """Precomputed word floor(w * 2**64 / q) for mul_shoup."""
    return np.uint64((int(w) << 64) // int(q))


def mul_shoup(a: np.ndarray, w, w_quot, q) -> np.ndarray:
    """a * w mod q for a constant w < q with precomputed quotient.

    Valid for any a < 2**64; result is canonical (< q).
    """
    with np.errstate(**_WRAP):
        approx = mul_hi(a, w_quot)
        r = a * w - approx * q
    return np.where(r >= q, r - q, r)


def add_mod(a: np.ndarray, b, q) -> np.ndarray:
    s = a + b
    return np.where(s >= q, s - q, s)


def sub_mod(a: np.ndarray, b, q) -> np.ndarray:
    d = a + q - b
    return np.where(d >= q, d - q, d)


def neg_mod(a: np.ndarray, q) -> np.ndarray:
    return np.where(a != 0, q - a, a)


def mul_mod(a: np.ndarray, b: np.ndarray, q, r64, r64_quot) -> np.ndarray:
    """General a*b mod q for canonical operands; q < 2**62.

    r64 = 2**64 mod q and its Shoup quotient must be supplied (they are
    cached on the owning ModulusLimb).
    """
    with np.errstate(**_WRAP):
        hi = mul_hi(a, b)
        lo = a * b
    t = mul_shoup(hi, r64, r64_quot, q) + lo % q
    return np.where(t >= q, t - q, t)


# --- integer-side utilities -------------------------------------------------

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime_u64(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for all n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_primes(n: int, count: int, bits: int = 55, exclude=()) -> list[int]:
    """Deterministically locate `count` primes p ≡ 1 (mod 2n) near 2**bits.

    Scans upward from 2**bits in steps of 2n, skipping anything in
    `exclude`.  Used for the auxiliary RNS base of exact ciphertext
    multiplication; the default limb primes are fixed constants instead.
    """
    step = 2 * n
    p = (1 << bits) // step * step + 1
    out: list[int] = []
    skip = set(exclude)
    while len(out) < count:
        p += step
        if p not in skip and is_prime_u64(p):
            out.append(p)
    return out


def primitive_2n_root(q: int, n: int) -> int:
    """Smallest-generator primitive 2n-th root of unity mod q.

    Requires q prime with q ≡ 1 (mod 2n); raises if the candidate sweep
    fails (cannot happen for valid inputs).
    """
    if (q - 1) % (2 * n) != 0:
        raise ValueError(f"q={q} does not support a 2*{n}-th root (q-1 not divisible)")
    exp = (q - 1) // (2 * n)
    for g in range(2, 4096):
        root = pow(g, exp, q)
        if pow(root, n, q) == q - 1:
            return root
    raise ValueError(f"no primitive 2n-th root found for q={q}, n={n}")


def bit_reverse(x: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r
