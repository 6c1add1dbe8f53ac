"""Torch models with the quantized quadratic activation baked in.

The activation is the power-of-two Swish approximation
2^-3 x^2 + 2^-1 x + 2^-4 (or the plain square); both are polynomials the
encrypted evaluator can execute, so the trained graph transfers without
approximation-gap surprises.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

# (sign, exponent) per ascending coefficient; realized below
SWISH_PSTAR_TERMS = ((1, -4), (1, -1), (1, -3))
SQUARE_TERMS = ((0, 0), (0, 0), (1, 0))


def realize(terms) -> tuple[float, float, float]:
    return tuple(0.0 if s == 0 else s * 2.0**e for s, e in terms)


class PolyAct(nn.Module):
    """y = c2 x^2 + c1 x + c0 with fixed power-of-two coefficients."""

    def __init__(self, terms=SWISH_PSTAR_TERMS):
        super().__init__()
        self.terms = tuple(terms)
        c0, c1, c2 = realize(terms)
        self.c0, self.c1, self.c2 = c0, c1, c2

    def forward(self, x):
        return self.c2 * x * x + self.c1 * x + self.c0

    def extra_repr(self) -> str:
        return f"{self.c2}*x^2 + {self.c1}*x + {self.c0}"


class DigitsNet(nn.Module):
    """Scaled-down digit classifier: conv-BN-act-pool-fc-BN-act-fc.

    activation is a power-of-two coefficient triple, or the string
    "relu" for the (non-exportable) accuracy control.
    """

    def __init__(self, maps: int = 8, hidden: int = 48, classes: int = 10,
                 activation=SWISH_PSTAR_TERMS):
        super().__init__()
        make_act = (lambda: nn.ReLU()) if activation == "relu" else (lambda: PolyAct(activation))
        self.conv1 = nn.Conv2d(1, maps, 3, stride=1, padding=1)
        self.bn1 = nn.BatchNorm2d(maps)
        self.act1 = make_act()
        self.pool = nn.AvgPool2d(2, stride=2)
        self.fc1 = nn.Linear(maps * 4 * 4, hidden)
        self.bn2 = nn.BatchNorm1d(hidden)
        self.act2 = make_act()
        self.fc2 = nn.Linear(hidden, classes)

    def forward(self, x):
        x = self.pool(self.act1(self.bn1(self.conv1(x))))
        x = x.flatten(1)
        return self.fc2(self.act2(self.bn2(self.fc1(x))))


class BlobsNet(nn.Module):
    """Two-layer perceptron for the synthetic sanity dataset."""

    def __init__(self, dim: int = 8, hidden: int = 16, classes: int = 2,
                 activation=SWISH_PSTAR_TERMS):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.bn1 = nn.BatchNorm1d(hidden)
        self.act1 = PolyAct(activation)
        self.fc2 = nn.Linear(hidden, classes)

    def forward(self, x):
        return self.fc2(self.act1(self.bn1(self.fc1(x))))


def he_init(model: nn.Module) -> None:
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def fold_batchnorm(model: nn.Module) -> list:
    """Flatten the model into inference-layer records with BN absorbed.

    Returns a list of ('conv'|'dense'|'act'|'pool', payload) tuples in
    execution order; conv/dense payloads are (weight, bias) numpy arrays
    with any adjacent BatchNorm folded in (using running statistics).
    """
    model.eval()
    records: list = []

    def fold_into(weight, bias, bn):
        gamma = bn.weight.detach().numpy()
        beta = bn.bias.detach().numpy()
        mean = bn.running_mean.detach().numpy()
        var = bn.running_var.detach().numpy()
        scale = gamma / np.sqrt(var + bn.eps)
        w = weight.detach().numpy()
        b = bias.detach().numpy() if bias is not None else np.zeros(w.shape[0])
        shaped = scale.reshape((-1,) + (1,) * (w.ndim - 1))
        return w * shaped, b * scale + (beta - mean * scale)

    modules = [m for m in model.children()]
    i = 0
    while i < len(modules):
        m = modules[i]
        nxt = modules[i + 1] if i + 1 < len(modules) else None
        if isinstance(m, nn.Conv2d):
            if isinstance(nxt, (nn.BatchNorm2d, nn.BatchNorm1d)):
                w, b = fold_into(m.weight, m.bias, nxt)
                i += 1
            else:
                w = m.weight.detach().numpy()
                b = m.bias.detach().numpy() if m.bias is not None else np.zeros(w.shape[0])
            records.append(("conv", (w, b, m.stride[0], m.padding[0])))
        elif isinstance(m, nn.Linear):
            if isinstance(nxt, (nn.BatchNorm2d, nn.BatchNorm1d)):
                w, b = fold_into(m.weight, m.bias, nxt)
                i += 1
            else:
                w = m.weight.detach().numpy()
                b = m.bias.detach().numpy() if m.bias is not None else np.zeros(w.shape[0])
            records.append(("dense", (w, b)))
        elif isinstance(m, PolyAct):
            records.append(("act", m.terms))
        elif isinstance(m, nn.AvgPool2d):
            k = m.kernel_size if isinstance(m.kernel_size, int) else m.kernel_size[0]
            s = m.stride if isinstance(m.stride, int) else m.stride[0]
            p = m.padding if isinstance(m.padding, int) else m.padding[0]
            records.append(("pool", (k, s, p)))
        i += 1
    return records


class MaskedConv2d(nn.Conv2d):
    """Conv layer whose forward uses weight * mask.

    The raw weight keeps training underneath the mask, so a pruned
    connection whose magnitude recovers can splice back in when the mask
    is re-ranked.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.register_buffer("mask", torch.ones_like(self.weight))

    def effective_weight(self) -> torch.Tensor:
        return self.weight * self.mask

    def forward(self, x):
        return self._conv_forward(x, self.effective_weight(), self.bias)


class MaskedLinear(nn.Linear):
    """Linear layer whose forward uses weight * mask (see MaskedConv2d)."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.register_buffer("mask", torch.ones_like(self.weight))

    def effective_weight(self) -> torch.Tensor:
        return self.weight * self.mask

    def forward(self, x):
        return nn.functional.linear(x, self.effective_weight(), self.bias)


class FoldedNet(nn.Module):
    """Re-trainable module built from folded records (no BN layers).

    This is the graph pruning and quantization operate on: what gets
    exported is exactly what gets trained.
    """

    def __init__(self, records, input_shape):
        super().__init__()
        self.input_shape = tuple(input_shape)
        self.plan = []
        params = nn.ModuleList()
        for kind, payload in records:
            if kind == "conv":
                w, b, stride, padding = payload
                conv = MaskedConv2d(
                    w.shape[1], w.shape[0], w.shape[2], stride=stride, padding=padding
                )
                with torch.no_grad():
                    conv.weight.copy_(torch.from_numpy(np.ascontiguousarray(w)))
                    conv.bias.copy_(torch.from_numpy(np.ascontiguousarray(b)))
                params.append(conv)
                self.plan.append(("conv", conv))
            elif kind == "dense":
                w, b = payload
                fc = MaskedLinear(w.shape[1], w.shape[0])
                with torch.no_grad():
                    fc.weight.copy_(torch.from_numpy(np.ascontiguousarray(w)))
                    fc.bias.copy_(torch.from_numpy(np.ascontiguousarray(b)))
                params.append(fc)
                self.plan.append(("dense", fc))
            elif kind == "act":
                act = PolyAct(payload)
                self.plan.append(("act", act))
            elif kind == "pool":
                k, s, p = payload
                self.plan.append(("pool", nn.AvgPool2d(k, stride=s, padding=p)))
        self.params = params

    def weighted_modules(self) -> list[nn.Module]:
        return [mod for kind, mod in self.plan if kind in ("conv", "dense")]

    def forward(self, x):
        flattened = False
        for kind, mod in self.plan:
            if kind == "dense" and not flattened and x.dim() > 2:
                x = x.flatten(1)
                flattened = True
            x = mod(x)
        return x
