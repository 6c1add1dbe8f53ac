"""Delimited reports and their companion figures.

Every CLI report path emits machine-readable CSV (or aligned text) plus a
rendered PNG next to it when asked; figures use the Agg backend so the
tool runs headless.
"""

from __future__ import annotations

import csv

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .approx import Activation, PolyApprox  # noqa: E402
from .engine import HopCounter  # noqa: E402

HOP_COLUMNS = (
    "layer",
    "pt_ct_add",
    "ct_ct_add",
    "pt_ct_mul",
    "ct_ct_mul",
    "wall_ms",
    "fast_path_hits",
)


def write_hops_csv(counter: HopCounter, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HOP_COLUMNS)
        for name, a, ca, m, cm, wall, fast in counter.rows():
            writer.writerow([name, a, ca, m, cm, f"{wall:.3f}", fast])
        t = counter.totals
        writer.writerow(
            ["total", t.pt_ct_add, t.ct_ct_add, t.pt_ct_mul, t.ct_ct_mul, f"{t.wall_ms:.3f}", t.fast_path_hits]
        )


def render_hops_figure(counter: HopCounter, path, title: str = "Homomorphic operations per layer") -> None:
    rows = counter.rows()
    names = [r[0] for r in rows]
    classes = ("pt_ct_add", "ct_ct_add", "pt_ct_mul", "ct_ct_mul")
    data = np.array([[r[1], r[2], r[3], r[4]] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(names)), 4))
    bottom = np.zeros(len(names))
    for j, cls in enumerate(classes):
        ax.bar(names, data[:, j], bottom=bottom, label=cls)
        bottom += data[:, j]
    ax.set_ylabel("HOPs")
    ax.set_title(title)
    ax.legend(fontsize=8)
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_sparsity_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["layer", "total", "surviving", "fraction", "monomial_encodable", "codebook"]
        )
        for r in rows:
            usage = ";".join(f"{k}:{v}" for k, v in sorted(r.codebook_usage.items()))
            writer.writerow(
                [r.name, r.total, r.surviving, f"{r.fraction:.6f}", int(r.monomial_encodable), usage]
            )


def render_sparsity_figure(rows, path) -> None:
    names = [r.name for r in rows]
    fractions = [r.fraction for r in rows]
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(names)), 3.5))
    bars = ax.bar(names, fractions, color=["#2a6f97" if r.monomial_encodable else "#bc4749" for r in rows])
    for bar, r in zip(bars, rows):
        ax.text(
            bar.get_x() + bar.get_width() / 2,
            bar.get_height(),
            f"{r.surviving}/{r.total}",
            ha="center",
            va="bottom",
            fontsize=7,
        )
    ax.set_ylabel("surviving fraction")
    ax.set_ylim(0, 1.05)
    ax.set_title("Layer sparsity (blue = fast-path encodable)")
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def format_approx_report(name: str, suite: dict[str, PolyApprox]) -> str:
    lines = [f"activation: {name}"]
    p = suite["minimax"]
    lines.append(f"interval: [-{p.interval_a:g}, {p.interval_a:g}], grid: {p.grid_points}")
    for label, key in (("minimax", "minimax"), ("rounded", "rounded"), ("optimal", "optimal")):
        poly = suite[key]
        terms = " + ".join(poly.term_strings()).replace("+ -", "- ")
        lines.append(f"{label:8s} p(x) = {terms}")
        lines.append(f"{'':8s} delta = {poly.delta:.9f}")
    if not suite["minimax"].converged:
        lines.append("warning: Remez exchange did not certify equioscillation")
    return "\n".join(lines)


def write_approx_csv(name: str, suite: dict[str, PolyApprox], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["activation", "variant", "degree", "coefficients", "pow2_terms", "delta"])
        for variant in ("minimax", "rounded", "optimal"):
            poly = suite[variant]
            terms = (
                ";".join(f"{s}*2^{e}" for s, e in poly.pow2_terms)
                if poly.pow2_terms
                else ""
            )
            coeffs = ";".join(f"{c:.12g}" for c in poly.coeffs)
            writer.writerow([name, variant, poly.degree, coeffs, terms, f"{poly.delta:.12g}"])


def render_approx_figure(act: Activation, suite: dict[str, PolyApprox], path) -> None:
    a = suite["minimax"].interval_a
    x = np.linspace(-a, a, 2001)
    fig, (top, bot) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    top.plot(x, act.f(x), "k", lw=2, label=f"{act.name}(x)")
    styles = {"minimax": ("C0", "p"), "rounded": ("C1", "p-hat"), "optimal": ("C2", "p*")}
    for variant, (color, label) in styles.items():
        top.plot(x, suite[variant].evaluate(x), color, lw=1.2, label=label)
    top.axvspan(-1, 1, color="C0", alpha=0.08)
    top.legend(fontsize=8)
    top.set_title(f"{act.name}: approximation variants")
    for variant in ("rounded", "optimal"):
        color, label = styles[variant]
        bot.plot(x, np.abs(act.f(x) - suite[variant].evaluate(x)), color, lw=1.2, label=f"|f - {label}|")
    bot.axvspan(-1, 1, color="C0", alpha=0.08)
    bot.set_xlabel("x")
    bot.set_ylabel("absolute error")
    bot.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
