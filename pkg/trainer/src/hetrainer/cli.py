"""Train, compress, and export a model in one command."""

from __future__ import annotations

import argparse
import sys

from .pipeline import PipelineResult, TrainConfig, export_weights, run_pipeline


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hecnet-train",
        description="Train a small model, prune + quantize it, export FCNW weights",
    )
    p.add_argument("--dataset", choices=("digits", "blobs"), default="digits")
    p.add_argument("--out", required=True, help="output FCNW path")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--retrain-epochs", type=int, default=6)
    p.add_argument("--activation", choices=("swish", "square"), default="swish")
    p.add_argument("--sparsity", default=None, help="comma list, one per weighted layer")
    p.add_argument("--partitions", default="0.5,0.75,0.875,1.0")
    p.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kwargs = dict(
        dataset=args.dataset,
        epochs=args.epochs,
        retrain_epochs=args.retrain_epochs,
        activation=args.activation,
        seed=args.seed,
        inq_partitions=[float(v) for v in args.partitions.split(",")],
    )
    if args.sparsity:
        kwargs["sparsities"] = [float(v) for v in args.sparsity.split(",")]
    elif args.dataset == "blobs":
        kwargs["sparsities"] = [0.6, 0.7]
    try:
        cfg = TrainConfig(**kwargs)
        result: PipelineResult = run_pipeline(cfg)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"baseline accuracy:  {result.baseline_acc:.4f}")
    print(f"folded accuracy:    {result.folded_acc:.4f}")
    print(f"pruned accuracy:    {result.pruned_acc:.4f}")
    for fraction, acc in result.inq_trace:
        print(f"  quantized {fraction * 100:5.1f}%: {acc:.4f}")
    print(f"quantized accuracy: {result.quantized_acc:.4f} "
          f"(drop {result.accuracy_drop * 100:.2f} points)")
    export_weights(result, args.out)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
