"""Command-line front end: key management, inference, the wire protocol,
and the analysis subcommands (approx / compress / hops).

Exit codes: 0 success, 1 runtime failure, 2 usage or file-parse error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import approx as approx_mod
from . import compress, engine, fv, protocol, report, weights_io
from .params_io import ParamsError, ParamsFile, load_params

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class CliError(RuntimeError):
    def __init__(self, message: str, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.code = code


def _load_params_arg(path: str) -> ParamsFile:
    try:
        return load_params(path)
    except FileNotFoundError:
        raise CliError(f"params file not found: {path}", EXIT_USAGE) from None
    except ParamsError as e:
        raise CliError(f"{path}: {e}", EXIT_USAGE) from None


def _load_model_arg(path: str) -> engine.NetworkSpec:
    try:
        return weights_io.load_network(path)
    except FileNotFoundError:
        raise CliError(f"model file not found: {path}", EXIT_USAGE) from None
    except weights_io.WeightsError as e:
        raise CliError(f"{path}: {e}", EXIT_USAGE) from None


def _read_input_csv(path: str, expected: int) -> np.ndarray:
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=1, dtype=np.float64)
    except OSError:
        raise CliError(f"input file not found: {path}", EXIT_USAGE) from None
    except ValueError as e:
        raise CliError(f"{path}: cannot parse CSV: {e}", EXIT_USAGE) from None
    flat = values.ravel()
    if flat.size != expected:
        raise CliError(
            f"{path}: expected {expected} input values, found {flat.size}", EXIT_USAGE
        )
    return flat


def _parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise CliError(f"address must be HOST:PORT, got {addr!r}", EXIT_USAGE)
    return host, int(port)


def _load_keys(keys_dir: str, pf: ParamsFile, need_secret: bool):
    base = Path(keys_dir)
    try:
        pk = fv.public_key_from_bytes((base / "pk.bin").read_bytes(), pf.params)
        ek = fv.eval_keys_from_bytes((base / "ek.bin").read_bytes(), pf.params)
        sk = None
        if need_secret:
            sk = fv.secret_key_from_bytes((base / "sk.bin").read_bytes(), pf.params)
    except FileNotFoundError as e:
        raise CliError(f"missing key file: {e.filename}", EXIT_USAGE) from None
    except fv.FVError as e:
        raise CliError(str(e), EXIT_USAGE) from None
    return sk, pk, ek


# --- subcommands ------------------------------------------------------------------


def cmd_keygen(args) -> int:
    pf = _load_params_arg(args.params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.bin" for name in ("sk", "pk", "ek")}
    clobbered = [str(p) for p in paths.values() if p.exists()]
    if clobbered and not args.force:
        raise CliError(
            f"refusing to overwrite existing keys ({', '.join(clobbered)}); use --force"
        )
    seed = args.seed if args.seed is not None else pf.seed
    if seed is None:
        seed = int.from_bytes(np.random.SeedSequence().entropy.to_bytes(16, "little")[:8], "little")
        print(f"note: no seed given; generated keys are not reproducible (entropy {seed})")
    sk, pk, ek = fv.keygen(pf.params, seed)
    paths["sk"].write_bytes(fv.secret_key_to_bytes(sk, pf.params))
    paths["pk"].write_bytes(fv.public_key_to_bytes(pk, pf.params))
    paths["ek"].write_bytes(fv.eval_keys_to_bytes(ek, pf.params))
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    print(f"parameters: {pf.params.describe()}")
    return EXIT_OK


def _decode_outputs(sk, out_tensors, pf: ParamsFile) -> np.ndarray:
    lane_plaintexts = [engine.decrypt_tensor(sk, t) for t in out_tensors]
    first = out_tensors[0]
    return engine.decode_lane_outputs(
        lane_plaintexts, first.shape, first.scale_exponent, first.scale_factor, pf.fixed_point
    )


def cmd_infer(args) -> int:
    pf = _load_params_arg(args.params)
    net = engine.fold_batchnorm(_load_model_arg(args.model))
    sk, pk, ek = _load_keys(args.keys, pf, need_secret=True)
    x = _read_input_csv(args.input, int(np.prod(net.input_shape)))

    from .encode import capacity_check

    capacity_check(net, pf.fixed_point, ring_degree=pf.params.n)
    rng = np.random.default_rng(args.seed)
    outs = []
    counter = None
    for lane in range(len(pf.params.t_lanes)):
        tensor = engine.encrypt_tensor(pk, pf.params, x, pf.fixed_point, lane, rng)
        out, counter = engine.eval_encrypted(net, tensor, ek, pf.fixed_point, args.workers)
        outs.append(out)
    scores = _decode_outputs(sk, outs, pf).ravel()
    for i, s in enumerate(scores):
        print(f"class {i}: {s:+.6f}")
    print(f"argmax: {int(np.argmax(scores))}")
    if args.hops_report:
        report.write_hops_csv(counter, args.hops_report)
        fig = Path(args.hops_report).with_suffix(".png")
        report.render_hops_figure(counter, fig)
        print(f"hop report: {args.hops_report} (+ {fig})")
    return EXIT_OK


def cmd_serve(args) -> int:
    pf = _load_params_arg(args.params)
    net = _load_model_arg(args.model)
    try:
        ek = fv.eval_keys_from_bytes(Path(args.eval_keys).read_bytes(), pf.params)
    except FileNotFoundError:
        raise CliError(f"eval-keys file not found: {args.eval_keys}", EXIT_USAGE) from None
    except fv.FVError as e:
        # loading anything but eval keys (e.g. a secret key) lands here
        raise CliError(f"{args.eval_keys}: {e}", EXIT_USAGE) from None
    host, port = _parse_addr(args.listen)
    server = protocol.InferenceServer(
        engine.fold_batchnorm(net),
        pf.params,
        pf.fixed_point,
        ek,
        pf.digest,
        host,
        port,
        payload_cap=args.max_payload,
        workers=args.workers,
    )
    print(f"serving {args.model} on {server.address[0]}:{server.address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def cmd_client(args) -> int:
    pf = _load_params_arg(args.params)
    sk, pk, _ = _load_keys(args.keys, pf, need_secret=True)
    host, port = _parse_addr(args.connect)
    shape = tuple(int(d) for d in args.input_shape.split(",")) if args.input_shape else None
    try:
        x = np.loadtxt(args.input, delimiter=",", ndmin=1, dtype=np.float64).ravel()
    except OSError:
        raise CliError(f"input file not found: {args.input}", EXIT_USAGE) from None
    rng = np.random.default_rng(args.seed)
    blobs = []
    for lane in range(len(pf.params.t_lanes)):
        tensor = engine.encrypt_tensor(
            pk, pf.params, x if shape is None else x.reshape(shape), pf.fixed_point, lane, rng
        )
        blobs.extend(fv.ciphertext_to_bytes(ct) for ct in tensor.cts)
    try:
        out_blobs, scale_factor = protocol.request_inference(
            host, port, pf.digest, blobs, pf.params
        )
    except protocol.ProtocolError as e:
        raise CliError(str(e)) from None
    except OSError as e:
        raise CliError(f"connection failed: {e}") from None
    cts = [fv.ciphertext_from_bytes(b, pf.params) for b in out_blobs]
    by_lane: dict[int, list] = {}
    for ct in cts:
        by_lane.setdefault(ct.lane, []).append(ct)
    counts = {len(v) for v in by_lane.values()}
    if len(counts) != 1:
        raise CliError("response lanes carry unequal output counts")
    out_count = counts.pop()
    tensors = [
        engine.CipherTensor(
            (out_count,), by_lane[lane], by_lane[lane][0].scale_exponent, scale_factor
        )
        for lane in sorted(by_lane)
    ]
    scores = _decode_outputs(sk, tensors, pf).ravel()
    for i, s in enumerate(scores):
        print(f"class {i}: {s:+.6f}")
    print(f"argmax: {int(np.argmax(scores))}")
    return EXIT_OK


def cmd_approx(args) -> int:
    act = approx_mod.get_activation(args.fn)
    suite = approx_mod.approximation_suite(args.fn, args.degree, args.interval, args.grid)
    print(report.format_approx_report(args.fn, suite))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"approx_{args.fn}.csv"
        fig_path = out / f"approx_{args.fn}.png"
        report.write_approx_csv(args.fn, suite, csv_path)
        report.render_approx_figure(act, suite, fig_path)
        print(f"report: {csv_path} (+ {fig_path})")
    return EXIT_OK


def cmd_compress(args) -> int:
    net = _load_model_arg(args.model)
    sparsities = None
    if args.sparsity:
        try:
            sparsities = [float(s) for s in args.sparsity.split(",")]
        except ValueError:
            raise CliError(f"cannot parse --sparsity {args.sparsity!r}", EXIT_USAGE) from None
    weighted = [l for l in net.layers if isinstance(l, (engine.Conv2d, engine.Dense))]
    if sparsities and len(sparsities) != len(weighted):
        raise CliError(
            f"--sparsity names {len(sparsities)} layers, model has {len(weighted)}",
            EXIT_USAGE,
        )
    for i, layer in enumerate(weighted):
        wt = compress.WeightTensor(layer.weights, layer.mask)
        if sparsities:
            wt = compress.prune_mask(wt, sparsities[i])
        if args.quantize:
            spec = compress.quant_bounds(wt, args.k)
            wt = compress.quantize_to_pow2(wt, spec, args.quantize)
        layer.weights = wt.values
        layer.mask = wt.mask
    rows = compress.sparsity_report(net, args.precision_bits)
    for r in rows:
        print(
            f"{r.name}: {r.surviving}/{r.total} surviving ({r.fraction:.4f}), "
            f"monomial-encodable: {r.monomial_encodable}"
        )
    if args.out:
        weights_io.save_network(net, args.out)
        print(f"wrote {args.out}")
    if args.report:
        report.write_sparsity_csv(rows, args.report)
        fig = Path(args.report).with_suffix(".png")
        report.render_sparsity_figure(rows, fig)
        print(f"sparsity report: {args.report} (+ {fig})")
    return EXIT_OK


def cmd_hops(args) -> int:
    if args.model:
        nets = {"model": engine.fold_batchnorm(_load_model_arg(args.model))}
    else:
        dense, sparse = engine.build_mnist_configs(maps=args.maps)
        nets = {"cryptonets": dense, "faster": sparse}
        if args.config != "both":
            nets = {args.config: nets[args.config]}
    totals = {}
    counter = None
    for name, net in nets.items():
        counter = engine.project_hops(net)
        t = counter.totals
        totals[name] = t.total()
        print(
            f"{name}: total {t.total()} "
            f"(pt_ct_add {t.pt_ct_add}, ct_ct_add {t.ct_ct_add}, "
            f"pt_ct_mul {t.pt_ct_mul}, ct_ct_mul {t.ct_ct_mul})"
        )
        if args.report:
            path = Path(args.report)
            target = path if len(nets) == 1 else path.with_stem(f"{path.stem}_{name}")
            report.write_hops_csv(counter, target)
            fig = target.with_suffix(".png")
            report.render_hops_figure(counter, fig, title=f"HOPs per layer: {name}")
            print(f"hop report: {target} (+ {fig})")
    if len(totals) == 2:
        dense_total, sparse_total = totals["cryptonets"], totals["faster"]
        print(f"dense/sparse total-HOP ratio: {dense_total / sparse_total:.2f}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hecnet",
        description="Encrypted CNN inference with sparse power-of-two fast paths",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate and store a key set")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=cmd_keygen)

    p = sub.add_parser("infer", help="local encrypt-evaluate-decrypt pipeline")
    p.add_argument("--params", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--keys", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--hops-report", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_infer)

    p = sub.add_parser("serve", help="run the blind inference server")
    p.add_argument("--params", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--eval-keys", required=True, help="public evaluation keys (ek.bin)")
    p.add_argument("--listen", required=True, metavar="HOST:PORT")
    p.add_argument("--max-payload", type=int, default=protocol.DEFAULT_PAYLOAD_CAP)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("client", help="encrypt input, query a server, decrypt")
    p.add_argument("--params", required=True)
    p.add_argument("--keys", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--connect", required=True, metavar="HOST:PORT")
    p.add_argument("--input-shape", dest="input_shape", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_client)

    p = sub.add_parser("approx", help="activation approximation report")
    p.add_argument("--fn", required=True, choices=sorted(approx_mod.ACTIVATIONS))
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--interval", type=float, default=approx_mod.DEFAULT_INTERVAL)
    p.add_argument("--grid", type=int, default=approx_mod.DEFAULT_GRID)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(handler=cmd_approx)

    p = sub.add_parser("compress", help="prune and quantize a stored model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--sparsity", default=None, help="comma list, one per weighted layer")
    p.add_argument("--quantize", type=float, default=None, metavar="FRACTION")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--precision-bits", type=int, default=15)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_compress)

    p = sub.add_parser("hops", help="static homomorphic-operation projection")
    p.add_argument("--config", choices=("cryptonets", "faster", "both"), default="both")
    p.add_argument("--maps", type=int, default=5)
    p.add_argument("--model", default=None, help="project a stored model instead")
    p.add_argument("--report", default=None)
    p.set_defaults(handler=cmd_hops)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (fv.FVError, engine.EngineError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
