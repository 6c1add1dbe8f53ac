"""Baseline training, the prune + incremental-quantization schedule, export.

The flow mirrors how the inference graph is actually deployed: train with
batch norm and the quadratic activation, fold batch norm into the linear
layers, then prune and progressively quantize the *folded* graph with
retraining between partitions, so the exported weights are exactly the
power-of-two values the encrypted evaluator multiplies by.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import fcnw
from .data import Split, load
from .model import BlobsNet, DigitsNet, FoldedNet, fold_batchnorm, he_init
from .quant import CompressionManager


@dataclass
class TrainConfig:
    dataset: str = "digits"
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.008
    lr_step_epochs: int = 10
    lr_gamma: float = 0.1
    momentum: float = 0.9
    seed: int = 0
    activation: str = "swish"            # swish (quantized approx) or square
    grad_clip_square: float = 0.25       # applied only with the square activation
    sparsities: list = field(default_factory=lambda: [0.7, 0.55, 0.75])
    inq_partitions: list = field(default_factory=lambda: [0.5, 0.75, 0.875, 1.0])
    retrain_epochs: int = 10
    retrain_lr: float | None = None      # defaults to lr / 4
    mask_refresh_steps: int = 40

    def __post_init__(self):
        if list(self.inq_partitions) != sorted(self.inq_partitions) or self.inq_partitions[-1] != 1.0:
            raise ValueError("partition schedule must increase monotonically to 1.0")


@dataclass
class PipelineResult:
    baseline_acc: float
    folded_acc: float
    pruned_acc: float
    quantized_acc: float
    inq_trace: list
    records: list
    input_shape: tuple

    @property
    def accuracy_drop(self) -> float:
        return self.baseline_acc - self.quantized_acc


def _batches(x, y, batch_size, rng):
    order = rng.permutation(len(x))
    for i in range(0, len(x), batch_size):
        idx = order[i : i + batch_size]
        yield torch.from_numpy(x[idx]).float(), torch.from_numpy(y[idx]).long()


def evaluate(model: nn.Module, x: np.ndarray, y: np.ndarray) -> float:
    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(x).float())
    return float((logits.argmax(1).numpy() == y).mean())


def _train_loop(model, split: Split, cfg: TrainConfig, epochs, lr, manager: CompressionManager | None):
    rng = np.random.default_rng(cfg.seed + 1)
    opt = torch.optim.SGD(model.parameters(), lr=lr, momentum=cfg.momentum)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=cfg.lr_step_epochs, gamma=cfg.lr_gamma)
    loss_fn = nn.CrossEntropyLoss()
    step = 0
    for _ in range(epochs):
        model.train()
        for xb, yb in _batches(split.x_train, split.y_train, cfg.batch_size, rng):
            opt.zero_grad()
            loss = loss_fn(model(xb), yb)
            loss.backward()
            if cfg.activation == "square":
                nn.utils.clip_grad_value_(model.parameters(), cfg.grad_clip_square)
            if manager is not None:
                manager.grad_hook()
            opt.step()
            if manager is not None:
                manager.reassert_pins()
                step += 1
                if step % cfg.mask_refresh_steps == 0:
                    manager.refresh_masks()
        sched.step()


def build_model(cfg: TrainConfig, split: Split) -> nn.Module:
    from .model import SQUARE_TERMS, SWISH_PSTAR_TERMS

    if cfg.activation == "relu":
        terms = "relu"  # plain-accuracy control; never exported
    else:
        terms = SWISH_PSTAR_TERMS if cfg.activation == "swish" else SQUARE_TERMS
    if cfg.dataset == "digits":
        model = DigitsNet(activation=terms, classes=split.classes)
    else:
        model = BlobsNet(dim=split.x_train.shape[1], classes=split.classes, activation=terms)
    he_init(model)
    return model


def train_baseline(cfg: TrainConfig) -> tuple[nn.Module, Split, float]:
    torch.manual_seed(cfg.seed)
    split = load(cfg.dataset, seed=cfg.seed)
    model = build_model(cfg, split)
    _train_loop(model, split, cfg, cfg.epochs, cfg.lr, manager=None)
    return model, split, evaluate(model, split.x_test, split.y_test)


def input_shape_for(split: Split) -> tuple:
    return tuple(split.x_train.shape[1:])


def run_pipeline(cfg: TrainConfig) -> PipelineResult:
    """train -> fold BN -> prune (with splicing) -> INQ schedule -> records."""
    model, split, baseline_acc = train_baseline(cfg)

    folded = FoldedNet(fold_batchnorm(model), input_shape_for(split))
    folded_acc = evaluate(folded, split.x_test, split.y_test)

    layers = folded.weighted_modules()
    if len(cfg.sparsities) != len(layers):
        raise ValueError(
            f"{len(cfg.sparsities)} sparsity targets for {len(layers)} weighted layers"
        )
    manager = CompressionManager(layers, list(cfg.sparsities))
    retrain_lr = cfg.retrain_lr if cfg.retrain_lr is not None else cfg.lr / 4
    _train_loop(folded, split, cfg, cfg.retrain_epochs, retrain_lr, manager)
    pruned_acc = evaluate(folded, split.x_test, split.y_test)

    trace = inq_schedule(folded, split, cfg, manager, retrain_lr)
    quantized_acc = trace[-1][1]

    records = export_records(folded, manager)
    return PipelineResult(
        baseline_acc=baseline_acc,
        folded_acc=folded_acc,
        pruned_acc=pruned_acc,
        quantized_acc=quantized_acc,
        inq_trace=trace,
        records=records,
        input_shape=input_shape_for(split),
    )


def inq_schedule(folded, split: Split, cfg: TrainConfig, manager: CompressionManager,
                 retrain_lr: float | None = None) -> list:
    """Alternate codebook snapping with retraining of the free remainder.

    At each partition fraction the largest surviving weights are pinned to
    the power-of-two codebook; everything still free keeps training until
    the final step quantizes the whole layer.  Returns the accuracy trace,
    one (fraction, test accuracy) pair per step.
    """
    if retrain_lr is None:
        retrain_lr = cfg.retrain_lr if cfg.retrain_lr is not None else cfg.lr / 4
    trace = []
    for fraction in cfg.inq_partitions:
        manager.quantize_partition(fraction)
        if fraction < 1.0:
            _train_loop(folded, split, cfg, cfg.retrain_epochs, retrain_lr, manager)
        acc = evaluate(folded, split.x_test, split.y_test)
        trace.append((fraction, acc))
    assert manager.fully_quantized(), "schedule ended with unquantized weights"
    return trace


def export_records(folded: FoldedNet, manager: CompressionManager | None) -> list:
    """Flatten the folded graph into FCNW-writable records."""
    records = []
    for kind, mod in folded.plan:
        if kind == "conv":
            w = mod.effective_weight().detach().numpy().astype(np.float64)
            b = mod.bias.detach().numpy().astype(np.float64)
            mask = mod.mask.detach().numpy().astype(np.float64)
            records.append(("conv", (w, b, mod.stride[0], mod.padding[0], mask)))
        elif kind == "dense":
            w = mod.effective_weight().detach().numpy().astype(np.float64)
            b = mod.bias.detach().numpy().astype(np.float64)
            mask = mod.mask.detach().numpy().astype(np.float64)
            records.append(("dense", (w, b, mask)))
        elif kind == "act":
            terms = mod.terms
            delta = _approx_error(terms)
            records.append(("act", (terms, 4.1, delta)))
        elif kind == "pool":
            k = mod.kernel_size if isinstance(mod.kernel_size, int) else mod.kernel_size[0]
            s = mod.stride if isinstance(mod.stride, int) else mod.stride[0]
            p = mod.padding if isinstance(mod.padding, int) else mod.padding[0]
            records.append(("pool", (k, s, p)))
    return records


def _approx_error(terms, a: float = 4.1, grid: int = 10001) -> float:
    """Max deviation of the quadratic from the Swish curve it approximates."""
    c = [0.0 if s == 0 else s * 2.0**e for s, e in terms]
    x = np.linspace(-a, a, grid)
    if terms == ((0, 0), (0, 0), (1, 0)):
        return 0.0  # the plain square is its own target
    swish = x / (1.0 + np.exp(-x))
    return float(np.max(np.abs(swish - (c[0] + c[1] * x + c[2] * x * x))))


def export_weights(result: PipelineResult, path) -> None:
    fcnw.write_fcnw(result.records, result.input_shape, path)


def forward_records(records: list, input_shape, x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass over exported records (export-fidelity oracle)."""
    data = np.asarray(x, dtype=np.float64).reshape(input_shape)
    for kind, payload in records:
        if kind == "dense":
            w, b, _ = payload
            data = w @ data.reshape(-1) + b
        elif kind == "conv":
            w, b, stride, padding, _ = payload
            c_in, h, wd = data.shape
            oc, _, kh, kw = w.shape
            oh = (h + 2 * padding - kh) // stride + 1
            ow = (wd + 2 * padding - kw) // stride + 1
            padded = np.pad(data, ((0, 0), (padding, padding), (padding, padding)))
            out = np.zeros((oc, oh, ow))
            for o in range(oc):
                for i in range(oh):
                    for j in range(ow):
                        r, cc = i * stride, j * stride
                        out[o, i, j] = np.sum(w[o] * padded[:, r : r + kh, cc : cc + kw]) + b[o]
            data = out
        elif kind == "act":
            c = [0.0 if s == 0 else s * 2.0**e for s, e in payload[0]]
            data = c[2] * data * data + c[1] * data + c[0]
        elif kind == "pool":
            k, s, p = payload
            c, h, wd = data.shape
            oh = (h + 2 * p - k) // s + 1
            ow = (wd + 2 * p - k) // s + 1
            padded = np.pad(data, ((0, 0), (p, p), (p, p)))
            out = np.zeros((c, oh, ow))
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        out[ch, i, j] = np.sum(
                            padded[ch, i * s : i * s + k, j * s : j * s + k]
                        ) / (k * k)
            data = out
    return data
