"""Command-line entry point.

Subcommands: ``generate`` (synthetic dataset), ``ingest`` (external
fully-observed data, with an optional watch-log adapter), ``run`` (the
scenario grid), ``report`` (figure CSVs and charts), ``verify``
(property suites).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .dataset import (
    SyntheticConfig,
    convert_watch_log,
    generate_synthetic,
    ingest_fully_observed,
    save_bundle,
)
from .harness import RunConfig, desk_config, enumerate_grid, paper_config, run_grid
from .report import FIGURES, emit_report
from .verify import run_verification

log = logging.getLogger(__name__)


def _add_generate(sub) -> None:
    p = sub.add_parser("generate", help="generate a synthetic fully observed dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--config", help="JSON file with generator field overrides")
    p.set_defaults(func=_cmd_generate)


def _cmd_generate(args) -> int:
    overrides = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
    config = SyntheticConfig.from_dict(overrides)
    bundle = generate_synthetic(config, seed=args.seed)
    save_bundle(bundle, args.out)
    print(
        f"wrote {args.out}: {bundle.n_test_users} test users x "
        f"{bundle.n_catalog_items} catalog items, "
        f"{int(bundle.ground_truth.relevance.sum())} positives, "
        f"{len(bundle.train_log.users)} train interactions"
    )
    return 0


def _add_ingest(sub) -> None:
    p = sub.add_parser("ingest", help="ingest a fully observed external dataset")
    p.add_argument("--test", help="test matrix CSV (user_id,item_id,label)")
    p.add_argument("--train", help="train log CSV (user_id,item_id,label[,weight])")
    p.add_argument(
        "--dense-watch",
        help="raw dense watch-log matrix; converted to the test CSV first",
    )
    p.add_argument(
        "--sparse-watch",
        help="raw sparse watch-log matrix; converted to the train CSV first",
    )
    p.add_argument("--holdout-fraction", type=float, default=0.10)
    p.add_argument("--holdout-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_ingest)


def _cmd_ingest(args) -> int:
    test_path, train_path = args.test, args.train
    if bool(args.dense_watch) != bool(args.sparse_watch):
        print("ingest: --dense-watch and --sparse-watch must be given together", file=sys.stderr)
        return 2
    if args.dense_watch:
        if test_path or train_path:
            print("ingest: use either --test/--train or the watch-log pair", file=sys.stderr)
            return 2
        converted_dir = os.path.join(args.out, "converted")
        test_path, train_path = convert_watch_log(args.dense_watch, args.sparse_watch, converted_dir)
    if not test_path or not train_path:
        print("ingest: --test and --train are required", file=sys.stderr)
        return 2
    bundle = ingest_fully_observed(
        test_path,
        train_path,
        holdout_fraction=args.holdout_fraction,
        holdout_seed=args.holdout_seed,
    )
    save_bundle(bundle, args.out)
    print(
        f"wrote {args.out}: {bundle.n_test_users} test users x "
        f"{bundle.n_catalog_items} catalog items, "
        f"{int(bundle.ground_truth.relevance.sum())} positives"
    )
    return 0


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="run the scenario grid")
    p.add_argument("--config", help="JSON run configuration file")
    p.add_argument(
        "--preset",
        choices=("desk", "paper"),
        help="built-in configuration; ignored when --config is given",
    )
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    p.add_argument(
        "--dry-run", action="store_true", help="print the scenario count and exit"
    )
    p.set_defaults(func=_cmd_run)


def _cmd_run(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = RunConfig.from_dict(json.load(fh))
    elif args.preset == "desk":
        config = desk_config()
    elif args.preset == "paper":
        config = paper_config()
    else:
        config = RunConfig()
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = dataclasses.replace(config, **overrides)
    if args.dry_run:
        config.validate()
        print(f"{len(enumerate_grid(config))} scenarios -> {config.out_dir}")
        return 0
    result = run_grid(config)
    print(
        f"wrote {result.results_path}: {result.n_scenarios} scenarios, "
        f"{result.n_failed} failed"
    )
    if result.n_failed:
        for failure in result.failures[:10]:
            print(f"  failed: {failure['key']}: {failure['error']}", file=sys.stderr)
        return 1
    return 0


def _add_report(sub) -> None:
    p = sub.add_parser("report", help="emit figure CSVs and SVG charts from a run")
    p.add_argument("--run", required=True, help="run output directory")
    p.add_argument(
        "--figure",
        default="all",
        choices=FIGURES + ("all",),
        help="which figure to emit (default: all)",
    )
    p.add_argument("--out", help="report directory (default: <run>/report)")
    p.add_argument("--metric", help="metric to plot, e.g. ndcg@100")
    p.set_defaults(func=_cmd_report)


def _parse_metric(text: str) -> tuple[str, int]:
    kind, _, depth = text.partition("@")
    if not depth.isdigit():
        raise SystemExit(f"report: bad metric {text!r}; expected e.g. ndcg@100")
    return kind, int(depth)


def _cmd_report(args) -> int:
    metric = _parse_metric(args.metric) if args.metric else None
    figures = FIGURES if args.figure == "all" else (args.figure,)
    for figure in figures:
        paths = emit_report(args.run, figure, out_dir=args.out, metric=metric)
        for path in paths:
            print(f"wrote {path}")
    return 0


def _add_verify(sub) -> None:
    p = sub.add_parser("verify", help="run the property suites")
    p.set_defaults(func=_cmd_verify)


def _cmd_verify(args) -> int:
    summary = run_verification()
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if summary["ok"] else 1


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="sampleval",
        description="Reliability of sampled offline recommender evaluation under exposure bias.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_ingest(sub)
    _add_run(sub)
    _add_report(sub)
    _add_verify(sub)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
