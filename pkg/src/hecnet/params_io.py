"""Text parameter files: `name = value` lines, strict keys, SHA-256 digest.

A params file fixes one deployment: ring degree, limb primes, plaintext
lanes, decomposition base, fixed-point precision, and the noise width.
The digest over the canonical rendering (seed excluded) is what client and
server compare before evaluating anything.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources

from .encode import FixedPointConfig
from .fv import EncryptionParams


class ParamsError(ValueError):
    """Parse or validation failure; message carries the line number."""


_KEYS = {
    "n": int,
    "limb_primes": "int_list",
    "t_lanes": "int_list",
    "beta": int,
    "precision_bits": int,
    "noise_stddev": float,
    "seed": int,
    "mul_depth_budget": int,
}
_REQUIRED = ("n", "limb_primes", "t_lanes")


@dataclass(frozen=True)
class ParamsFile:
    params: EncryptionParams
    fixed_point: FixedPointConfig
    seed: int | None

    @property
    def digest(self) -> bytes:
        return params_digest(self.params, self.fixed_point)


def _parse_value(key: str, raw: str, lineno: int):
    kind = _KEYS[key]
    try:
        if kind == "int_list":
            return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
        return kind(raw)
    except ValueError:
        raise ParamsError(f"line {lineno}: cannot parse value for {key!r}: {raw!r}") from None


def parse_params_text(text: str) -> ParamsFile:
    seen: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParamsError(f"line {lineno}: expected 'name = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ParamsError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ParamsError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = _parse_value(key, raw.strip(), lineno)
    for key in _REQUIRED:
        if key not in seen:
            raise ParamsError(f"missing required key {key!r}")
    try:
        params = EncryptionParams(
            n=seen["n"],
            limb_primes=tuple(seen["limb_primes"]),
            t_lanes=tuple(seen["t_lanes"]),
            beta=seen.get("beta", 1 << 32),
            noise_stddev=seen.get("noise_stddev", 3.2),
            mul_depth_budget=seen.get("mul_depth_budget", 3),
        )
        fixed = FixedPointConfig(
            t_lanes=tuple(seen["t_lanes"]),
            precision_bits=seen.get("precision_bits", 15),
        )
    except ValueError as e:
        raise ParamsError(f"invalid parameters: {e}") from None
    return ParamsFile(params, fixed, seen.get("seed"))


def load_params(path) -> ParamsFile:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_params_text(fh.read())


def params_to_text(pf: ParamsFile, include_seed: bool = True) -> str:
    lines = [
        f"n = {pf.params.n}",
        "limb_primes = " + ", ".join(str(p) for p in pf.params.limb_primes),
        "t_lanes = " + ", ".join(str(t) for t in pf.params.t_lanes),
        f"beta = {pf.params.beta}",
        f"precision_bits = {pf.fixed_point.precision_bits}",
        f"noise_stddev = {pf.params.noise_stddev}",
        f"mul_depth_budget = {pf.params.mul_depth_budget}",
    ]
    if include_seed and pf.seed is not None:
        lines.append(f"seed = {pf.seed}")
    return "\n".join(lines) + "\n"


def params_digest(params: EncryptionParams, fixed: FixedPointConfig) -> bytes:
    """SHA-256 over the canonical rendering; the seed never participates."""
    pf = ParamsFile(params, fixed, None)
    return hashlib.sha256(params_to_text(pf, include_seed=False).encode()).digest()


def load_bundled(name: str) -> ParamsFile:
    """Parameter sets shipped with the package: 'default', 'mnist', 'tiny'."""
    data = resources.files("hecnet").joinpath(f"data/{name}.params").read_text()
    return parse_params_text(data)
