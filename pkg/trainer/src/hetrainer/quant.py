"""Training-time pruning and incremental power-of-two quantization.

Pruning keeps per-layer surviving-fraction targets by magnitude ranking
over the raw weights; because forward passes multiply by the mask while
the raw weights keep training underneath it, re-ranking every few steps
lets dropped connections splice back in when their magnitude recovers.

Quantization snaps the largest surviving weights onto the codebook
{0, +-2^n2 .. +-2^n1} with n1 = floor(log2(4s/3)) and
n2 = n1 + 1 - 2^(k-1)/2 (k = 5), pins them there (gradients zeroed and
values re-asserted after every optimizer step, so momentum cannot drift
them), and leaves the remainder training; the partition fraction grows
monotonically to 1.0 across the schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class LayerQuantState:
    module: nn.Module                # MaskedConv2d or MaskedLinear
    target_sparsity: float           # surviving fraction
    frozen: torch.Tensor             # 1 where the weight is pinned to the codebook
    pinned: torch.Tensor             # the codebook values at frozen positions
    n1: int = 0
    n2: int = 0


def magnitude_mask(weight: torch.Tensor, surviving: float) -> torch.Tensor:
    n = weight.numel()
    keep = max(1, math.ceil(surviving * n))
    flat = weight.detach().abs().reshape(-1)
    idx = torch.argsort(flat, descending=True, stable=True)[:keep]
    mask = torch.zeros(n, dtype=weight.dtype)
    mask[idx] = 1.0
    return mask.reshape(weight.shape)


def codebook_bounds(weight: torch.Tensor, mask: torch.Tensor, k: int = 5) -> tuple[int, int]:
    s = float((weight.detach().abs() * mask).max())
    n1 = int(math.floor(math.log2(4.0 * s / 3.0)))
    n2 = n1 + 1 - (1 << (k - 1)) // 2
    return n1, n2


def snap(weight: torch.Tensor, n1: int, n2: int) -> torch.Tensor:
    """Arithmetic-midpoint snapping onto {0, +-2^n2 .. +-2^n1}."""
    mag = weight.abs()
    out = torch.zeros_like(weight)
    live = mag >= 0.75 * 2.0**n2
    exp = torch.floor(torch.log2(mag.clamp(min=1e-30) * 4.0 / 3.0)).clamp(max=n1)
    out[live] = torch.sign(weight[live]) * 2.0 ** exp[live]
    return out


class CompressionManager:
    """Owns mask, freeze, and pin state for every weighted layer."""

    def __init__(self, layers: list[nn.Module], sparsities: list[float], k: int = 5):
        if len(layers) != len(sparsities):
            raise ValueError("one sparsity target per weighted layer required")
        self.k = k
        self.states = []
        for m, s in zip(layers, sparsities):
            m.mask.copy_(magnitude_mask(m.weight, s))
            self.states.append(
                LayerQuantState(
                    module=m,
                    target_sparsity=s,
                    frozen=torch.zeros_like(m.weight),
                    pinned=torch.zeros_like(m.weight),
                )
            )

    def refresh_masks(self) -> None:
        """Splicing: re-rank raw magnitudes; frozen positions stay put."""
        for st in self.states:
            fresh = magnitude_mask(st.module.weight, st.target_sparsity)
            frozen_alive = st.frozen * (st.pinned != 0)
            mask = torch.maximum(fresh, frozen_alive)
            # a frozen zero is a permanently removed connection
            mask = mask * (1.0 - st.frozen * (st.pinned == 0).to(mask.dtype))
            st.module.mask.copy_(mask)

    def quantize_partition(self, fraction: float) -> None:
        """Snap the largest `fraction` of surviving weights and pin them."""
        for st in self.states:
            w = st.module.weight
            mask = st.module.mask
            st.n1, st.n2 = codebook_bounds(w, mask, self.k)
            eff = (w.detach().abs() * mask).reshape(-1)
            alive = torch.nonzero(eff, as_tuple=False).reshape(-1)
            count = max(1, math.ceil(fraction * alive.numel()))
            order = torch.argsort(eff[alive], descending=True, stable=True)[:count]
            chosen = alive[order]
            snapped = snap(w.detach().reshape(-1)[chosen], st.n1, st.n2)
            with torch.no_grad():
                w.reshape(-1)[chosen] = snapped
                st.frozen.reshape(-1)[chosen] = 1.0
                st.pinned.reshape(-1)[chosen] = snapped
                # snapping to zero removes the connection
                mask.reshape(-1)[chosen] *= (snapped != 0).to(mask.dtype)

    def grad_hook(self) -> None:
        """Zero gradients of pinned weights (masked ones keep training)."""
        for st in self.states:
            if st.module.weight.grad is not None:
                st.module.weight.grad.mul_(1.0 - st.frozen)

    def reassert_pins(self) -> None:
        """Undo any optimizer drift (momentum) on pinned weights."""
        with torch.no_grad():
            for st in self.states:
                w = st.module.weight
                w.mul_(1.0 - st.frozen).add_(st.pinned * st.frozen)

    def surviving_fractions(self) -> list[float]:
        return [
            float((st.module.effective_weight().detach() != 0).float().mean())
            for st in self.states
        ]

    def fully_quantized(self) -> bool:
        for st in self.states:
            eff = st.module.effective_weight().detach()
            nz = eff[eff != 0]
            if nz.numel() == 0:
                continue
            exps = torch.log2(nz.abs())
            if not torch.allclose(exps, torch.round(exps), atol=1e-9):
                return False
        return True
