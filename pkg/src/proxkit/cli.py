"""Command-line interface.

Subcommands: synth, train, classify, retrieve, sweep. Exit codes: 0 success,
2 usage error, 3 data error, 4 artifact mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import RunConfig
from .contribution import VARIANTS
from .errors import ArtifactError, DataError
from .pipeline import run_classify, run_retrieve, run_sweep, run_synth, run_train
from .store import ArtifactStore

_MODE_ALIASES = {"ker": "kernel", "unc": "uncertainty", "pla": "plausibility"}


def _mode_token(raw: str) -> str:
    token = raw.strip().lower()
    token = _MODE_ALIASES.get(token, token)
    if token not in VARIANTS:
        raise argparse.ArgumentTypeError(
            f"unknown mode {raw!r}; expected one of {', '.join(VARIANTS)}"
        )
    return token


def _int_list(raw: str) -> list[int]:
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}")


def _mode_list(raw: str) -> list[str]:
    return [_mode_token(tok) for tok in raw.split(",") if tok.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--threads", type=int, help="worker thread cap (default 1)")
    p.add_argument("--mode", type=_mode_token, help="contribution variant: hard|kernel|uncertainty|plausibility")
    p.add_argument("--sigma", type=float, help="kernel bandwidth (default: codebook mean nn distance)")
    p.add_argument("--top-t", dest="top_t", type=int, help="retained words per feature (default 5)")
    p.add_argument("--vocab", type=int, help="codebook size K (default 200)")
    p.add_argument("--rank-r", dest="rank_r", type=int, help="neighbor rank depth R (default 16)")
    p.add_argument("--patch", type=int, help="patch side, odd (default 9)")
    p.add_argument("--stride", type=int, help="patch grid stride (default 4)")
    p.add_argument("--pca-dim", dest="pca_dim", type=int, help="descriptor dimension (default 7)")
    p.add_argument("--epsilon", type=float, help="weight floor (default 1e-8)")
    p.add_argument("--classifier", choices=("knn", "svm"), help="classifier (default svm)")
    p.add_argument("--k", type=int, help="k-NN neighbor count (default 1)")
    p.add_argument("--knn-metric", dest="knn_metric", choices=("apdk", "l1"),
                   help="k-NN pairing: kernel similarity or L1 histogram distance")
    p.add_argument("--c", type=float, help="SVM soft-margin C (default 1.0)")
    p.add_argument("--tol", type=float, help="SVM KKT tolerance (default 1e-3)")
    p.add_argument("--cutoffs", type=_int_list, help="PR cutoffs, e.g. 5,10,15,20,30")
    p.add_argument("--top-n", dest="top_n", type=int, help="retrieval list length (default 30)")
    p.add_argument("--split", choices=("train", "test"), help="query split (default test)")
    p.add_argument("--allow-self", dest="allow_self", action=argparse.BooleanOptionalAction,
                   default=None, help="permit self-matches when querying the train split")
    p.add_argument("--normalize-kernel", dest="normalize_kernel",
                   action=argparse.BooleanOptionalAction, default=None,
                   help="divide kernel values by sqrt(k(Y,Y) k(Z,Z))")
    p.add_argument("--include-self-pairs", dest="include_self_pairs",
                   action=argparse.BooleanOptionalAction, default=None,
                   help="count each feature against itself in the distribution")
    p.add_argument("--hist-normalize", dest="hist_normalize",
                   action=argparse.BooleanOptionalAction, default=None,
                   help="L1 baseline uses frequency-normalized histograms (default on)")


_OVERRIDE_FIELDS = (
    "manifest", "out", "patch", "stride", "pca_dim", "vocab", "rank_r", "mode",
    "sigma", "top_t", "epsilon", "classifier", "knn_metric", "split",
    "allow_self", "top_n", "seed", "threads", "normalize_kernel",
    "include_self_pairs", "hist_normalize",
)


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for name in _OVERRIDE_FIELDS:
        if getattr(args, name, None) is not None:
            out[name] = getattr(args, name)
    if getattr(args, "k", None) is not None:
        out["knn_k"] = args.k
    if getattr(args, "c", None) is not None:
        out["svm_c"] = args.c
    if getattr(args, "tol", None) is not None:
        out["svm_tol"] = args.tol
    if getattr(args, "cutoffs", None) is not None:
        out["cutoffs"] = tuple(args.cutoffs)
    return out


def _assemble(parser: argparse.ArgumentParser, args: argparse.Namespace,
              base: RunConfig | None = None) -> RunConfig:
    if base is None:
        base = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    elif getattr(args, "config", None):
        base = RunConfig.load(args.config)
    cfg = base.merged(**_overrides(args))
    try:
        cfg.validate()
    except ValueError as exc:
        parser.error(str(exc))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxkit",
        description="Visual-word proximity distributions: train, classify, retrieve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic texture dataset")
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.add_argument("--classes", type=int, default=4)
    p_synth.add_argument("--per-class", dest="per_class", type=int, default=30)
    p_synth.add_argument("--side", type=int, default=64)
    p_synth.add_argument("--seed", type=int, default=0)

    p_train = sub.add_parser("train", help="fit and persist all training artifacts")
    p_train.add_argument("--manifest", help="dataset manifest path")
    p_train.add_argument("--out", help="artifact output directory")
    _add_common(p_train)

    p_classify = sub.add_parser("classify", help="label a split against stored artifacts")
    p_classify.add_argument("--artifacts", required=True, help="artifact directory from train")
    p_classify.add_argument("--manifest", help="dataset manifest override")
    _add_common(p_classify)

    p_retrieve = sub.add_parser("retrieve", help="rank the training database per query")
    p_retrieve.add_argument("--artifacts", required=True, help="artifact directory from train")
    p_retrieve.add_argument("--manifest", help="dataset manifest override")
    _add_common(p_retrieve)

    p_sweep = sub.add_parser("sweep", help="train + classify over vocab sizes x modes")
    p_sweep.add_argument("--manifest", help="dataset manifest path")
    p_sweep.add_argument("--out", help="sweep output root")
    p_sweep.add_argument("--vocab-sizes", dest="vocab_sizes", type=_int_list,
                         required=True, help="comma-separated codebook sizes")
    p_sweep.add_argument("--modes", type=_mode_list, required=True,
                         help="comma-separated contribution variants")
    _add_common(p_sweep)

    return parser


def _cmd_synth(args: argparse.Namespace) -> int:
    path = run_synth(args.out, args.classes, args.per_class, args.side, args.seed)
    print(path)
    return 0


def _cmd_train(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    cfg = _assemble(parser, args)
    if not cfg.manifest:
        parser.error("train requires --manifest (or a config file providing it)")
    if not cfg.out:
        parser.error("train requires --out (or a config file providing it)")
    summary = run_train(cfg)
    print(f"config: {json.dumps(cfg.to_dict(), sort_keys=True)}")
    for stage, seconds in summary["timings"].items():
        print(f"{stage}: {seconds:.2f}s")
    print(f"artifacts: {summary['out']}")
    return 0


def _cmd_classify(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    store = ArtifactStore(args.artifacts)
    base = RunConfig.load(args.config) if args.config else store.load_config()
    cfg = base.merged(**_overrides(args))
    try:
        cfg.validate()
    except ValueError as exc:
        parser.error(str(exc))
    report = run_classify(store, cfg)
    for row in report["accuracy_by_mode"]:
        print(
            f"mode={row['mode']} vocab={row['vocab']} classifier={row['classifier']} "
            f"split={row['split']} accuracy={row['accuracy']:.4f} (n={row['n_queries']})"
        )
    print(f"report: {store.report_path}")
    return 0


def _cmd_retrieve(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    store = ArtifactStore(args.artifacts)
    base = RunConfig.load(args.config) if args.config else store.load_config()
    cfg = base.merged(**_overrides(args))
    try:
        cfg.validate()
    except ValueError as exc:
        parser.error(str(exc))
    report = run_retrieve(store, cfg)
    for row in report.get("pr_table", []):
        print(
            f"cutoff={row['cutoff']:>3} precision={row['precision']:.4f} "
            f"recall={row['recall']:.4f} (queries={row['n_queries']})"
        )
    print(f"report: {store.report_path}")
    return 0


def _cmd_sweep(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    cfg = _assemble(parser, args)
    if not cfg.manifest:
        parser.error("sweep requires --manifest (or a config file providing it)")
    if not cfg.out:
        parser.error("sweep requires --out (or a config file providing it)")
    report = run_sweep(cfg, args.vocab_sizes, args.modes)
    for row in report["accuracy_by_mode"]:
        if row["status"] == "ok":
            print(f"vocab={row['vocab']:>4} mode={row['mode']:<13} accuracy={row['accuracy']:.4f}")
        else:
            print(f"vocab={row['vocab']:>4} mode={row['mode']:<13} FAILED: {row['error']}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "train":
            return _cmd_train(parser, args)
        if args.command == "classify":
            return _cmd_classify(parser, args)
        if args.command == "retrieve":
            return _cmd_retrieve(parser, args)
        if args.command == "sweep":
            return _cmd_sweep(parser, args)
        parser.error(f"unknown command {args.command!r}")
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


def run() -> None:
    sys.exit(main())
