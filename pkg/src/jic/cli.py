"""Command-line entry point: ``jic {select,decompose,cluster,simulate}``.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
Exit status is 0 on success, 1 on data or numerical errors and 2 on usage
errors; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .blocks import preprocess
from .decomposition import Ranks, cluster_decomposition, jic_decompose
from .exceptions import JICError, RankError
from .io import FLOAT_FMT, read_blockset, write_block, write_json, write_labels
from .selection import ScanRule, qq_data, select_cluster_numbers
from .simulation import SimConfig, generate, run_monte_carlo

log = logging.getLogger("jic")

SCALE_CHOICES = {"frobenius": "frobenius", "variance": "total_variance", "none": None}


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _scan_rule(text):
    try:
        return str(ScanRule.parse(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _alpha(text):
    a = float(text)
    if not 0 < a < 0.5:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 0.5)")
    return a


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_common(p, scan_default="lookahead:4"):
    g = p.add_argument_group("analysis options")
    g.add_argument("--alpha", type=_alpha, default=0.05, help="normality test level (default: 0.05)")
    g.add_argument("--tol", type=float, default=1e-8, help="relative convergence tolerance")
    g.add_argument("--max-iter", type=_positive_int, default=500, help="alternating iterations cap")
    g.add_argument("--restarts", type=_positive_int, default=30, help="k-means restarts (default: 30)")
    g.add_argument("--seed", type=int, default=0, help="master random seed (default: 0)")
    g.add_argument("--scale", choices=sorted(SCALE_CHOICES), default="frobenius",
                   help="per-block scaling (default: frobenius)")
    g.add_argument("--center", choices=["on", "off"], default="on", help="row-center blocks")
    g.add_argument("--scan-rule", type=_scan_rule, default=scan_default,
                   help=f"component scan: first-normal or lookahead:N (default: {scan_default})")
    g.add_argument("--threads", type=_positive_int, default=1, help="worker thread cap")
    g.add_argument("--out", type=Path, required=True, help="output directory")
    g.add_argument("--delimiter", default=None, help="input delimiter (default: sniff tab/comma)")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jic", description="Joint and individual clustering of multi-block data."
    )
    parser.add_argument("--version", action="version", version=f"jic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="estimate joint and individual cluster numbers")
    p.add_argument("blocks", nargs="+", type=Path, help="block files (variables x samples)")
    p.add_argument("--max-components", type=_positive_int, default=None,
                   help="leading components tested per scan (default: min(n-1, 30))")
    _add_common(p)

    p = sub.add_parser("decompose", help="fit the joint/individual low-rank model")
    p.add_argument("blocks", nargs="+", type=Path)
    p.add_argument("--joint-rank", type=int, required=True)
    p.add_argument("--individual-ranks", type=_int_list, default=None,
                   help="comma-separated ranks, one per block (default: all 0)")
    _add_common(p)

    p = sub.add_parser("cluster", help="decompose and assign joint and individual clusters")
    p.add_argument("blocks", nargs="+", type=Path)
    p.add_argument("--joint-k", type=_positive_int, required=True)
    p.add_argument("--individual-k", type=_int_list, default=None,
                   help="comma-separated cluster numbers, one per block (default: all 1)")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo benchmark on synthetic blocks")
    p.add_argument("--setting", choices=["I", "II"], default="I")
    p.add_argument("--replicates", type=_positive_int, default=100)
    p.add_argument("--n", type=_positive_int, default=150, help="samples per replicate")
    p.add_argument("--k-joint", type=int, default=5, help="number of joint clusters")
    p.add_argument("--p-m", type=_int_list, default=[200, 200, 200], help="variables per block")
    p.add_argument("--c", type=float, default=80.0, help="joint signal strength")
    p.add_argument("--c-m", type=_float_list, default=[30.0], help="individual signal strengths")
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--known-k", action="store_true", help="skip cluster-number estimation")
    p.add_argument("--dump-blocks", type=Path, default=None, metavar="DIR",
                   help="write the raw blocks and truth labels of one replicate to DIR")
    p.add_argument("--dump-replicate", type=int, default=0, help="replicate index to dump")
    _add_common(p, scan_default="first-normal")
    return parser


def _prepare(args):
    if len(args.blocks) < 1:
        raise UsageError("at least one block file is required")
    bs = read_blockset([str(b) for b in args.blocks], delimiter=args.delimiter)
    log.info("read %d blocks, %d samples, sizes %s", len(bs), bs.n_samples, bs.sizes)
    return bs, preprocess(bs, center=args.center == "on", scale=SCALE_CHOICES[args.scale])


def _executor(args):
    return ThreadPoolExecutor(args.threads) if args.threads > 1 else nullcontext(None)


def _sample_ids(bs):
    return list(bs.sample_ids) if bs.sample_ids is not None else None


def _write_qq(directory, name, scores):
    directory.mkdir(parents=True, exist_ok=True)
    for i, row in enumerate(scores):
        qq = qq_data(row)
        with open(directory / f"{name}_PC{i + 1}.csv", "w") as fh:
            fh.write("theoretical_quantile,sample_quantile\n")
            for a, b in qq:
                fh.write(f"{FLOAT_FMT % a},{FLOAT_FMT % b}\n")


def cmd_select(args):
    if len(args.blocks) < 2:
        raise UsageError("select needs at least two block files")
    raw, bs = _prepare(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        sel = select_cluster_numbers(bs, alpha=args.alpha, rule=args.scan_rule,
                                     max_components=args.max_components)
    for w in caught:
        print(f"jic: warning: {w.message}", file=sys.stderr)
    out = sel.as_dict()
    out["blocks"] = [str(b) for b in args.blocks]
    write_json(args.out / "selection.json", out)
    qq = args.out / "qq"
    _write_qq(qq, "joint", sel.joint_scores[: len(sel.joint_reports)])
    for m, (scores, reps) in enumerate(zip(sel.block_scores, sel.block_reports)):
        _write_qq(qq, f"block{m + 1}", scores[: len(reps)])
    print(f"K={sel.K} " + " ".join(f"K_{m + 1}={k}" for m, k in enumerate(sel.K_m)))
    return {"E": sel.E, "E_m": list(sel.E_m), "K": sel.K, "K_m": list(sel.K_m)}


def _decompose(args, bs, ranks):
    with _executor(args) as ex:
        d = jic_decompose(bs, ranks, tol=args.tol, max_iter=args.max_iter, executor=ex)
    if not d.converged:
        print(f"jic: warning: no convergence after {d.iterations} iterations", file=sys.stderr)
    return d


def _ranks_from(values, M, name, default):
    values = [default] * M if values is None else values
    if len(values) != M:
        raise UsageError(f"{name} has {len(values)} entries for {M} blocks")
    return values


def cmd_decompose(args):
    raw, bs = _prepare(args)
    r_m = _ranks_from(args.individual_ranks, len(bs), "--individual-ranks", 0)
    d = _decompose(args, bs, Ranks(args.joint_rank, tuple(r_m)))
    d.save(args.out / "decomposition")
    return {"iterations": d.iterations, "converged": d.converged, "residual_sq": d.residual_sq}


def cmd_cluster(args):
    raw, bs = _prepare(args)
    K_m = _ranks_from(args.individual_k, len(bs), "--individual-k", 1)
    if any(k < 1 for k in K_m):
        raise UsageError("--individual-k entries must be >= 1")
    ranks = Ranks.from_cluster_counts(args.joint_k, K_m)
    d = _decompose(args, bs, ranks)
    cl = cluster_decomposition(d, restarts=args.restarts, seed=args.seed)
    ids = _sample_ids(raw)
    write_labels(args.out / "joint_labels.csv", cl.joint_labels, ids)
    for m, lab in enumerate(cl.individual_labels):
        write_labels(args.out / f"block{m + 1}_labels.csv", lab, ids)
    d.save(args.out / "decomposition")
    write_json(args.out / "clustering.json", cl.diagnostics())
    return {"iterations": d.iterations, "converged": d.converged, **cl.diagnostics()}


def cmd_simulate(args):
    try:
        cfg = SimConfig(
            setting=args.setting, n=args.n, K_joint=args.k_joint, p_m=tuple(args.p_m),
            c=args.c, c_m=tuple(args.c_m), noise_sd=args.noise_sd, seed=args.seed,
            replicates=args.replicates, restarts=args.restarts, tol=args.tol,
            max_iter=args.max_iter, center=args.center == "on",
            scale=SCALE_CHOICES[args.scale], alpha=args.alpha, scan_rule=args.scan_rule,
            unknown_k=not args.known_k,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    with warnings.catch_warnings():
        # the remainder warning fires per replicate; the report records E and E_m
        warnings.simplefilter("ignore", RuntimeWarning)
        report = run_monte_carlo(cfg, threads=args.threads)
    report.write(args.out / "report.csv", args.out / "summary.json")
    if args.dump_blocks is not None:
        _dump_blocks(cfg, args.dump_replicate, args.dump_blocks)
    summary = report.summary()
    print(f"setting {cfg.setting}: joint precision {summary['precision']['joint']:.4f}")
    return {"config": asdict(cfg)}


def _dump_blocks(cfg, replicate, directory):
    directory.mkdir(parents=True, exist_ok=True)
    bs, truth = generate(cfg, replicate)
    ids = list(bs.sample_ids)
    for m, b in enumerate(bs):
        var_ids = [f"v{i + 1}" for i in range(b.shape[0])]
        write_block(directory / f"X{m + 1}.csv", b.data, ids, var_ids)
    write_labels(directory / "truth_joint.csv", truth.joint_labels, ids)
    for m, lab in enumerate(truth.individual_labels):
        write_labels(directory / f"truth_block{m + 1}.csv", lab, ids)
    write_json(directory / "manifest.json", {
        "command": "simulate --dump-blocks", "replicate": replicate,
        "config": asdict(cfg), "version": __version__,
    })


COMMANDS = {
    "select": cmd_select,
    "decompose": cmd_decompose,
    "cluster": cmd_cluster,
    "simulate": cmd_simulate,
}

PARAM_KEYS = ("alpha", "tol", "max_iter", "restarts", "seed", "scale", "center", "scan_rule",
              "threads", "delimiter")


def _manifest(args, argv, result, duration):
    params = {k: getattr(args, k) for k in PARAM_KEYS}
    extra = {k: v for k, v in vars(args).items()
             if k not in PARAM_KEYS and k not in ("command", "blocks", "out", "verbose")}
    params.update({k: (str(v) if isinstance(v, Path) else v) for k, v in extra.items()})
    return {
        "command": args.command,
        "argv": list(argv),
        "inputs": [str(b) for b in getattr(args, "blocks", [])],
        "params": params,
        "result": result,
        "version": __version__,
        "numpy_version": np.__version__,
        "duration_seconds": duration,
    }


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="jic: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"jic {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RankError as exc:
        print(f"jic {args.command}: error: infeasible ranks: {exc}", file=sys.stderr)
        return 1
    except (JICError, OSError) as exc:
        print(f"jic {args.command}: error: {exc}", file=sys.stderr)
        return 1
    duration = time.perf_counter() - t0
    write_json(args.out / "manifest.json", _manifest(args, argv, result, duration))
    return 0


if __name__ == "__main__":
    sys.exit(main())
