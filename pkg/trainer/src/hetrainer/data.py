"""Desk-scale datasets: synthetic Gaussian blobs and the bundled 8x8 digits.

Both return float64 features scaled into [0, 1]-ish ranges and integer
labels, with deterministic train/test splits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Split:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def classes(self) -> int:
        return int(self.y_train.max()) + 1


def blobs(n_per_class: int = 600, dim: int = 8, seed: int = 0) -> Split:
    """Two well-separated Gaussian clusters; a sanity dataset."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-0.8, 0.8, (2, dim))
    while np.linalg.norm(centers[0] - centers[1]) < 1.2:
        centers = rng.uniform(-0.8, 0.8, (2, dim))
    xs, ys = [], []
    for label, c in enumerate(centers):
        xs.append(rng.normal(0, 0.25, (n_per_class, dim)) + c)
        ys.append(np.full(n_per_class, label))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(len(x))
    x, y = x[order], y[order]
    cut = int(0.8 * len(x))
    return Split(x[:cut], y[:cut], x[cut:], y[cut:])


def digits(seed: int = 0) -> Split:
    """The bundled 8x8 handwritten-digit set, pixel values scaled to [0, 1].

    Serves as the offline stand-in for a full-size digit corpus; splits
    are an 80/20 seeded shuffle.
    """
    from sklearn.datasets import load_digits

    d = load_digits()
    x = (d.images / 16.0).astype(np.float64)[:, None, :, :]  # (N, 1, 8, 8)
    y = d.target.astype(np.int64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(x))
    x, y = x[order], y[order]
    cut = int(0.8 * len(x))
    return Split(x[:cut], y[:cut], x[cut:], y[cut:])


def load(name: str, seed: int = 0) -> Split:
    if name == "blobs":
        return blobs(seed=seed)
    if name == "digits":
        return digits(seed=seed)
    raise ValueError(f"unknown dataset {name!r} (choose blobs or digits)")
