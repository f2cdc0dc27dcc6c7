"""Command-line entry point: ``nmfpool {stats,train,cv,coarsen,gradcheck}``.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    POOL_TABLE,
    DatasetError,
    canonical_name,
    parse_tu_dataset,
    pool_sizes,
    published_pool_sizes,
    stratified_folds,
)
from .graph import adjacency, default_feature_spec, node_features, normalize_adjacency
from .layers import coarsen, pool_features
from .model import ModelConfig, TrainReport, cross_validate, gradcheck_model, prepare_dataset, train_fold
from .nmf import NmfConfig
from .toy import toy_graphs

log = logging.getLogger("nmfpool")

GRADCHECK_TOL = 1e-5


class UsageError(Exception):
    """Invalid command line or configuration (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _rounded(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else round(obj, 6)
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, np.generic):
        return _rounded(obj.item())
    return obj


def dump_json(obj, out) -> str:
    text = json.dumps(_rounded(obj), indent=2, sort_keys=False) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    return text


def write_matrix(path: Path, m) -> None:
    with open(path, "w", newline="\n") as fh:
        for row in np.atleast_2d(m):
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_matrix(path) -> np.ndarray:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    return np.array([[float(x) for x in row] for row in rows])


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nmfpool", description="Graph classification with NMF node pooling.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model=True):
        p.add_argument("--dataset-dir", default=os.environ.get("NMFPOOL_DATA"),
                       help="directory holding TU datasets (default: $NMFPOOL_DATA)")
        p.add_argument("--dataset", help="dataset name, e.g. ENZYMES")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="-", help="output file or directory ('-' for stdout)")
        p.add_argument("-v", "--verbose", action="store_true")
        if model:
            p.add_argument("--layers", type=int, help="number of graph convolutions")
            p.add_argument("--pools", type=_int_list, action="append",
                           help="comma separated pool sizes; repeat for a grid of alternatives")
            p.add_argument("--hidden", type=_int_list, default=[64], help="hidden width(s), comma separated")
            p.add_argument("--conv", default="gcn", help="gcn or cheb:K")
            p.add_argument("--folds", type=int, default=3)
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--max-epochs", type=int, default=200)
            p.add_argument("--batch", type=int, default=32)
            p.add_argument("--renormalize-pooled", action="store_true")

    p = sub.add_parser("stats", help="dataset statistics and pool sizes")
    common(p, model=False)
    p.add_argument("--pool-fraction", type=float, help="fraction p for k1 = floor(avg_nodes * p)")

    p = sub.add_parser("train", help="train and test a single fold")
    common(p)
    p.add_argument("--fold", type=int, default=0)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    common(p)

    p = sub.add_parser("coarsen", help="write NMF coarsening of every graph")
    common(p, model=False)
    p.add_argument("--pools", type=_int_list, help="comma separated pool sizes (default: published sizes)")
    p.add_argument("--pool-fraction", type=float)

    p = sub.add_parser("gradcheck", help="finite-difference check of all model gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=5, help="number of seeds per configuration")
    p.add_argument("--corrupt", action="store_true", help="double analytic gradients (self-test)")
    p.add_argument("--out", default="-")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args):
    if not args.dataset:
        raise UsageError("--dataset is required")
    if not args.dataset_dir:
        raise UsageError("--dataset-dir is required (or set NMFPOOL_DATA)")
    return parse_tu_dataset(args.dataset_dir, args.dataset)


def _configs(args) -> list[ModelConfig]:
    """All model configurations requested on the command line (one per grid point)."""
    problems = []
    try:
        cheb = args.conv != "gcn" and int(args.conv.split(":", 1)[1])
    except (IndexError, ValueError):
        cheb = None
        problems.append(f"--conv must be 'gcn' or 'cheb:K' (got {args.conv!r})")
    pool_sets = args.pools or [[]]
    configs = []
    for ks in pool_sets:
        layers = args.layers if args.layers is not None else len(ks) + 1
        for hidden in args.hidden:
            cfg = ModelConfig(
                conv_layers=layers,
                pool_layers=len(ks),
                hidden_dim=hidden,
                pool_ks=tuple(ks),
                conv_kind=args.conv if cheb is not None else "gcn",
                max_epochs=args.max_epochs,
                batch_size=args.batch,
                seed=args.seed,
                renormalize_pooled=args.renormalize_pooled,
            )
            problems += [p for p in cfg.problems() if p not in problems]
            configs.append(cfg)
    if args.folds < 2:
        problems.append("--folds must be >= 2")
    if args.jobs < 1:
        problems.append("--jobs must be >= 1")
    if problems:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(problems))
    return configs


def cmd_stats(args) -> int:
    bundle = _load(args)
    avg_nodes, avg_edges = bundle.stats
    out = {
        "dataset": bundle.name,
        "graphs": len(bundle),
        "classes": bundle.num_classes,
        "avg_nodes": avg_nodes,
        "avg_edges": avg_edges,
    }
    fraction = args.pool_fraction
    if fraction is None and bundle.name in POOL_TABLE:
        fraction = POOL_TABLE[bundle.name][1]
    if fraction is not None:
        try:
            k1, k2 = pool_sizes(avg_nodes, fraction, 2)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        out.update(pool_fraction=fraction, k1=k1, k2=k2)
    if bundle.name in POOL_TABLE:
        out["published_pool_sizes"] = published_pool_sizes(bundle.name)
    out["warnings"] = bundle.warnings
    dump_json(out, args.out)
    return 0


def _report_dict(reports: list[TrainReport]) -> dict:
    if len(reports) == 1:
        return reports[0].to_json_dict()
    best = min(range(len(reports)), key=lambda i: reports[i].mean_best_val_loss)
    return {
        "grid": [r.to_json_dict() for r in reports],
        "selected": best,
        "selection": "min_mean_validation_loss",
        "artifact_version": __version__,
    }


def cmd_cv(args) -> int:
    configs = _configs(args)
    bundle = _load(args)
    reports = [cross_validate(bundle, cfg, n_folds=args.folds, jobs=args.jobs) for cfg in configs]
    dump_json(_report_dict(reports), args.out)
    return 0


def cmd_train(args) -> int:
    configs = _configs(args)
    if not 0 <= args.fold < args.folds:
        raise UsageError(f"--fold must lie in 0..{args.folds - 1}")
    bundle = _load(args)
    reports = []
    for cfg in configs:
        plan = stratified_folds(bundle, args.folds, cfg.seed, cfg.val_fraction)
        result = train_fold(bundle, plan, args.fold, cfg, prepare_dataset(bundle, cfg))
        reports.append(TrainReport(bundle.name, cfg, [result]))
    dump_json(_report_dict(reports), args.out)
    return 0


def cmd_coarsen(args) -> int:
    bundle = _load(args)
    ks = args.pools
    if ks is None:
        if args.pool_fraction is not None:
            ks = pool_sizes(bundle.stats[0], args.pool_fraction, 2)
        elif canonical_name(bundle.name) in POOL_TABLE:
            ks = published_pool_sizes(bundle.name)
        else:
            raise UsageError("--pools or --pool-fraction is required for this dataset")
    if not ks or any(k < 1 for k in ks):
        raise UsageError("pool sizes must be >= 1")
    if args.out in (None, "-"):
        raise UsageError("coarsen needs --out DIR")
    root = Path(args.out)
    spec = default_feature_spec(bundle.graphs)
    clamped = 0
    for gid, g in enumerate(bundle.graphs):
        a = normalize_adjacency(adjacency(g))
        z = node_features(g, spec)
        for level, k in enumerate(ks, start=1):
            trace = coarsen(a, k, NmfConfig(k=k, seed=args.seed + level - 1))
            clamped += trace.k_effective < k
            z = pool_features(trace, z)
            d = root / f"graph_{gid}" / f"level_{level}"
            d.mkdir(parents=True, exist_ok=True)
            write_matrix(d / "adjacency_in.txt", trace.a_in)
            write_matrix(d / "assignment.txt", trace.s)
            write_matrix(d / "adjacency.txt", trace.a_out)
            write_matrix(d / "features.txt", z)
            a = trace.a_out
    summary = {"dataset": bundle.name, "graphs": len(bundle), "pool_sizes": list(ks), "clamped_levels": clamped,
               "output": str(root)}
    dump_json(summary, root / "summary.json")
    dump_json(summary, "-")
    return 0


GRADCHECK_SUITE = {
    "1-GC": dict(conv_layers=1, pool_layers=0, pool_ks=()),
    "2-GC": dict(conv_layers=2, pool_layers=0, pool_ks=()),
    "2-GC+1-NMFPool": dict(conv_layers=2, pool_layers=1, pool_ks=(4,)),
    "3-GC+2-NMFPool": dict(conv_layers=3, pool_layers=2, pool_ks=(4, 2)),
    "cheb-K3": dict(conv_layers=1, pool_layers=0, pool_ks=(), conv_kind="cheb:3"),
}


def run_gradcheck(seed: int = 0, n_seeds: int = 5, corrupt: bool = False) -> dict:
    cases = []
    for name, fields in GRADCHECK_SUITE.items():
        for s in range(seed, seed + n_seeds):
            cfg = ModelConfig(hidden_dim=16, seed=s, **fields)
            # every class is used as target: with a saturated softmax one of them has zero loss
            err = max(
                gradcheck_model(cfg, dataclasses.replace(g, graph_label=target), corrupt=corrupt, num_classes=2)
                for g in toy_graphs()
                for target in (0, 1)
            )
            cases.append({"config": name, "seed": s, "max_rel_error": err})
    worst = max(c["max_rel_error"] for c in cases)
    return {"cases": cases, "max_rel_error": worst, "tolerance": GRADCHECK_TOL, "pass": worst < GRADCHECK_TOL}


def cmd_gradcheck(args) -> int:
    result = run_gradcheck(args.seed, args.seeds, args.corrupt)
    out = dict(result)
    # keep tiny errors visible instead of rounding them to zero
    out["max_rel_error"] = float(f"{result['max_rel_error']:.6e}")
    out["cases"] = [dict(c, max_rel_error=float(f"{c['max_rel_error']:.6e}")) for c in result["cases"]]
    text = json.dumps(out, indent=2) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0 if result["pass"] else 2


COMMANDS = {"stats": cmd_stats, "train": cmd_train, "cv": cmd_cv, "coarsen": cmd_coarsen, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"nmfpool: error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, OSError, ValueError, FloatingPointError) as exc:
        print(f"nmfpool: failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
