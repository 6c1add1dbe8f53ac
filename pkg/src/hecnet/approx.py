"""Minimax activation approximation with power-of-two coefficient search.

Pipeline: `remez_minimax` finds the real-coefficient minimax polynomial p
on [-a, a]; `round_coeffs_pow2` snaps each coefficient to the nearest
signed power of two giving p-hat; `scan_optimal_pow2` exhaustively searches
sign/exponent windows around p-hat for the best power-of-two-coefficient
polynomial p-star whose error stays within the bound K.  The error measure
delta is the max absolute deviation on a uniform grid (endpoints included),
optionally sharpened with bisection-refined stationary points; the chain
delta(p) <= delta(p*) <= delta(p-hat) holds by construction.

Power-of-two coefficients are the point: their fixed-point encodings are
monomials, which the ring layer multiplies in O(n) instead of O(n log n).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np


class ApproxError(ValueError):
    pass


@dataclass(frozen=True)
class Activation:
    """Closed-form activation with (optional) derivative for extrema refinement."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray] | None = None


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


ACTIVATIONS: dict[str, Activation] = {
    "relu": Activation("relu", lambda x: np.maximum(0.0, x)),
    "swish": Activation(
        "swish",
        lambda x: x * _sigmoid(x),
        lambda x: _sigmoid(x) + x * _sigmoid(x) * (1.0 - _sigmoid(x)),
    ),
    "softplus": Activation(
        "softplus", lambda x: np.logaddexp(0.0, x), lambda x: _sigmoid(x)
    ),
    "square": Activation("square", lambda x: x * x, lambda x: 2.0 * x),
}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name.lower()]
    except KeyError:
        raise ApproxError(
            f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None


# Swish attains its global minimum of about -0.278465 at x ~ -1.27846
# (root of 1 + e^-x + x e^-x); used as a sanity anchor in tests.
SWISH_MIN_X = -1.27846
SWISH_MIN_VALUE = -0.278465

DEFAULT_INTERVAL = 4.1
DEFAULT_GRID = 10001
SCAN_WINDOW = 3


@dataclass(frozen=True)
class PolyApprox:
    """Degree-n polynomial approximation, optionally with power-of-two terms.

    coeffs are ascending (c0, c1, ..., c_degree).  pow2_terms, when set,
    holds one (sign, exponent) pair per coefficient with sign 0 marking a
    structurally zero coefficient; coeffs then realize those terms exactly.
    """

    degree: int
    coeffs: tuple[float, ...]
    interval_a: float
    delta: float
    grid_points: int = DEFAULT_GRID
    pow2_terms: tuple[tuple[int, int], ...] | None = None
    converged: bool = True

    def __post_init__(self):
        if len(self.coeffs) != self.degree + 1:
            raise ApproxError("coefficient count does not match degree")

    @property
    def is_pow2(self) -> bool:
        return self.pow2_terms is not None

    def evaluate(self, x):
        acc = np.zeros_like(np.asarray(x, dtype=float))
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def term_strings(self) -> list[str]:
        """Human-readable monomial list, highest degree first."""
        out = []
        for i in range(self.degree, -1, -1):
            if self.pow2_terms is not None:
                s, e = self.pow2_terms[i]
                if s == 0:
                    continue
                c = f"{'-' if s < 0 else ''}2^{e}"
            else:
                c = f"{self.coeffs[i]:.9g}"
            out.append(f"{c}{'' if i == 0 else ('x' if i == 1 else f'x^{i}')}")
        return out or ["0"]


def realize_pow2(terms) -> tuple[float, ...]:
    return tuple(0.0 if s == 0 else s * 2.0**e for s, e in terms)


def _poly_eval(coeffs, x):
    acc = np.zeros_like(x)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def max_error(
    fn: Activation | Callable,
    coeffs,
    a: float,
    grid_points: int = DEFAULT_GRID,
) -> float:
    """delta = max |f - p| on the uniform grid over [-a, a].

    The uniform grid with endpoints is the definition of delta used
    everywhere; when the activation carries a derivative, stationary points
    of f - p are bisection-refined and added, which can only tighten the
    reported maximum upward.
    """
    if grid_points < 1001:
        raise ApproxError("grid_points must be at least 1001")
    coeffs = tuple(coeffs.coeffs) if isinstance(coeffs, PolyApprox) else tuple(coeffs)
    act = fn if isinstance(fn, Activation) else Activation("f", fn)
    x = np.linspace(-a, a, grid_points)
    err = act.f(x) - _poly_eval(coeffs, x)
    delta = float(np.max(np.abs(err)))
    if act.df is not None:
        dcoeffs = tuple((i + 1) * c for i, c in enumerate(coeffs[1:]))
        de = act.df(x) - _poly_eval(dcoeffs, x)
        flips = np.nonzero(np.signbit(de[:-1]) != np.signbit(de[1:]))[0]
        for i in flips:
            lo, hi = x[i], x[i + 1]
            dlo = de[i]
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                dm = float(act.df(mid) - _poly_eval(dcoeffs, np.float64(mid)))
                if (dm < 0) == (dlo < 0):
                    lo, dlo = mid, dm
                else:
                    hi = mid
            xs = 0.5 * (lo + hi)
            delta = max(delta, abs(float(act.f(xs) - _poly_eval(coeffs, np.float64(xs)))))
    return delta


def remez_minimax(
    fn: Activation | Callable,
    degree: int,
    a: float,
    max_iters: int = 64,
    dense_points: int = 200001,
) -> PolyApprox:
    """Remez exchange on a dense grid; equioscillating minimax on [-a, a].

    Converged means the levelled reference error |E| meets the grid maximum
    (the equioscillation certificate); otherwise the last iterate is
    returned with converged=False.
    """
    act = fn if isinstance(fn, Activation) else Activation("f", fn)
    npts = degree + 2
    xs = np.cos(np.pi * np.arange(npts) / (npts - 1))[::-1] * a
    gx = np.linspace(-a, a, dense_points)
    fg = act.f(gx)
    coeffs = np.zeros(degree + 1)
    converged = False
    for _ in range(max_iters):
        vand = np.vander(xs, degree + 1, increasing=True)
        signs = (-1.0) ** np.arange(npts)
        sol = np.linalg.solve(np.hstack([vand, signs[:, None]]), act.f(xs))
        coeffs, lev = sol[:-1], abs(sol[-1])
        err = _poly_eval(tuple(coeffs), gx) - fg
        ae = np.abs(err)
        grid_delta = float(ae.max())
        if grid_delta <= 1e-12 or grid_delta - lev <= 1e-9 * grid_delta:
            converged = True
            break
        # one representative (max |err|) per maximal same-sign run
        sgn = np.where(err >= 0, 1, -1)
        starts = np.concatenate([[0], np.nonzero(np.diff(sgn))[0] + 1])
        ends = np.concatenate([starts[1:], [dense_points]])
        reps = [s + int(np.argmax(ae[s:e])) for s, e in zip(starts, ends)]
        if len(reps) < npts:
            break  # degenerate error profile; report last iterate unconverged
        best = None
        for s0 in range(len(reps) - npts + 1):
            window = reps[s0 : s0 + npts]
            low = min(ae[j] for j in window)
            if best is None or low > best[0]:
                best = (low, window)
        new_xs = gx[best[1]]
        if np.allclose(new_xs, xs, rtol=0, atol=1e-15 * a):
            converged = grid_delta - lev <= 1e-6 * max(grid_delta, 1e-12)
            break
        xs = new_xs
    cs = tuple(float(c) for c in coeffs)
    return PolyApprox(
        degree=degree,
        coeffs=cs,
        interval_a=a,
        delta=max_error(act, cs, a),
        converged=converged,
    )


def round_exponent(c: float) -> tuple[int, int]:
    """(sign, round(log2 |c|)); exact halves round toward smaller magnitude."""
    if c == 0.0:
        return (0, 0)
    sign = 1 if c > 0 else -1
    lg = math.log2(abs(c))
    floor = math.floor(lg)
    frac = lg - floor
    if abs(frac - 0.5) < 1e-12:
        return (sign, floor)
    return (sign, floor if frac < 0.5 else floor + 1)


def round_coeffs_pow2(p: PolyApprox, fn: Activation | None = None) -> PolyApprox:
    """p-hat: every coefficient snapped to the nearest signed power of two."""
    terms = tuple(round_exponent(c) for c in p.coeffs)
    coeffs = realize_pow2(terms)
    delta = max_error(fn, coeffs, p.interval_a, p.grid_points) if fn else p.delta
    return replace(p, coeffs=coeffs, pow2_terms=terms, delta=delta)


def scan_optimal_pow2(
    fn: Activation | Callable,
    degree: int,
    a: float = DEFAULT_INTERVAL,
    K: float | None = None,
    window: int = SCAN_WINDOW,
    grid_points: int = DEFAULT_GRID,
    minimax: PolyApprox | None = None,
) -> PolyApprox:
    """Best power-of-two polynomial p* within the windowed candidate set.

    Both signs and exponent offsets in [-window, window] around each
    rounded-minimax exponent are enumerated (2*(2w+1) options per
    coefficient); delta is evaluated on the same uniform grid for every
    candidate and the feasible (delta <= K) minimizer is returned, with
    ties broken toward the lexicographically smallest exponent tuple.
    K defaults to delta(f, p-hat), so the feasible set is never empty.
    """
    act = fn if isinstance(fn, Activation) else Activation("f", fn)
    if minimax is None:
        minimax = remez_minimax(act, degree, a)
    phat = round_coeffs_pow2(replace(minimax, grid_points=grid_points), act)
    k_bound = phat.delta if K is None else float(K)
    if K is not None and k_bound < minimax.delta:
        raise ApproxError(
            f"error bound K={k_bound} is below the minimax error {minimax.delta}"
        )

    x = np.linspace(-a, a, grid_points)
    fx = act.f(x)
    powers = np.stack([x**i for i in range(degree + 1)])  # (deg+1, G)
    # coarse subgrid: its max underestimates the full-grid max, so any
    # candidate infeasible on it is infeasible outright
    stride = max(1, grid_points // 500)
    coarse_powers = powers[:, ::stride]
    coarse_fx = fx[::stride]

    options: list[list[tuple[int, int]]] = []
    for s0, e0 in phat.pow2_terms:
        if s0 == 0:
            options.append([(0, 0)])
            continue
        options.append(
            [(s, e0 + d) for d in range(-window, window + 1) for s in (1, -1)]
        )

    cands = list(itertools.product(*options))
    mat = np.array([realize_pow2(c) for c in cands])  # (B, deg+1)
    coarse = np.abs(mat @ coarse_powers - coarse_fx).max(axis=1)
    eps = 1e-15 * max(1.0, k_bound)
    survivors = np.nonzero(coarse <= k_bound + eps)[0]

    best_key = None
    best_terms = None
    for i in survivors:
        d = float(np.max(np.abs(mat[i] @ powers - fx)))
        if d > k_bound + eps:
            continue
        key = (d, tuple(e for _, e in cands[i]), tuple(s for s, _ in cands[i]))
        if best_key is None or key < best_key:
            best_key, best_terms = key, cands[i]

    if best_terms is None:
        raise ApproxError(f"no power-of-two polynomial satisfies K={k_bound}")
    # Re-evaluate the winner through max_error so its delta is ulp-consistent
    # with p-hat's; the chain delta(p*) <= delta(p-hat) must hold exactly.
    best_delta = max_error(act, realize_pow2(best_terms), a, grid_points)
    if tuple(best_terms) != phat.pow2_terms and best_delta > phat.delta:
        best_terms, best_delta = phat.pow2_terms, phat.delta
    return PolyApprox(
        degree=degree,
        coeffs=realize_pow2(best_terms),
        interval_a=a,
        delta=best_delta,
        grid_points=grid_points,
        pow2_terms=tuple(best_terms),
    )


def approximation_suite(
    name: str,
    degree: int = 2,
    a: float = DEFAULT_INTERVAL,
    grid_points: int = DEFAULT_GRID,
) -> dict[str, PolyApprox]:
    """minimax / rounded / optimal triple for one activation."""
    act = get_activation(name)
    p = remez_minimax(act, degree, a)
    p = replace(p, grid_points=grid_points, delta=max_error(act, p, a, grid_points))
    phat = round_coeffs_pow2(p, act)
    pstar = scan_optimal_pow2(act, degree, a, grid_points=grid_points, minimax=p)
    return {"minimax": p, "rounded": phat, "optimal": pstar}


def square_activation() -> PolyApprox:
    """The plain x^2 activation in PolyApprox form (exact, delta 0)."""
    return PolyApprox(
        degree=2,
        coeffs=(0.0, 0.0, 1.0),
        interval_a=DEFAULT_INTERVAL,
        delta=0.0,
        pow2_terms=((0, 0), (0, 0), (1, 0)),
    )


def swish_pstar() -> PolyApprox:
    """The quantized Swish approximation 2^-3 x^2 + 2^-1 x + 2^-4."""
    terms = ((1, -4), (1, -1), (1, -3))
    return PolyApprox(
        degree=2,
        coeffs=realize_pow2(terms),
        interval_a=DEFAULT_INTERVAL,
        delta=max_error(get_activation("swish"), realize_pow2(terms), DEFAULT_INTERVAL),
        pow2_terms=terms,
    )
