"""Command-line interface.

`flaremap run` executes the full pipeline from a panel CSV; `flaremap compare`
diffs two completed runs. Defaults follow the baseline configuration (window
5, log rescale, cosine distance, 2 filter dimensions, 20 cubes at 50 percent
overlap, 10 histogram bins). A JSON config file can override defaults and
flags override the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import FlaremapError, ValidationError
from .pipeline import RunConfig, compare_runs, format_compare_report, run_pipeline


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flaremap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline on a panel CSV")
    run.add_argument("--config", help="JSON config file; flags override its values")
    run.add_argument("--input", help="panel CSV (entity,period,category,count)")
    run.add_argument("--outcomes", help="outcomes CSV (entity,revenue,ebit,market_value)")
    run.add_argument("--out", help="output directory for this run")
    run.add_argument("--window", type=int, help="moving-window width (default 5)")
    run.add_argument("--rescale", choices=["log", "share"], help="rescaling protocol")
    run.add_argument(
        "--metric",
        choices=["cosine", "euclidean", "correlation", "mincomplement", "mahalanobis"],
        help="dissimilarity measure",
    )
    run.add_argument("--mahalanobis-lambda", type=float, dest="mahalanobis_lambda")
    run.add_argument("--filter-dims", type=int, dest="filter_dims", help="PCA dimensions (default 2)")
    run.add_argument("--cubes", type=int, help="cover resolution per dimension (default 20)")
    run.add_argument("--overlap", type=float, help="cover overlap fraction (default 0.5)")
    run.add_argument("--bins", type=int, help="gap-heuristic histogram bins (default 10)")
    run.add_argument("--baseline-k", type=int, dest="baseline_k", help="run clustering baselines with this k")
    run.add_argument("--seed", type=int, help="seed for the clustering baselines")
    run.add_argument("--workers", type=int, help="threads for matrix fill and clustering")
    run.add_argument("--cache-dir", dest="cache_dir", help="directory for dissimilarity matrix caches")
    run.add_argument("--entity-col", dest="entity_col", help="entity column name")
    run.add_argument("--period-col", dest="period_col", help="period column name")
    run.add_argument("--category-col", dest="category_col", help="category column name")
    run.add_argument("--count-col", dest="count_col", help="count column name")

    compare = sub.add_parser("compare", help="diff two completed run manifests")
    compare.add_argument("run_a", help="first run directory or manifest.json")
    compare.add_argument("run_b", help="second run directory or manifest.json")
    compare.add_argument("--json", action="store_true", help="emit the diff as JSON")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ValidationError(f"config file {path} does not exist")
        with path.open(encoding="utf-8") as handle:
            try:
                loaded = json.load(handle)
            except json.JSONDecodeError as error:
                raise ValidationError(f"config file {path} is not valid JSON: {error}") from None
        known = {field.name for field in dataclasses.fields(RunConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for field in dataclasses.fields(RunConfig):
        flag = getattr(args, field.name, None)
        if flag is not None:
            values[field.name] = flag
    if "input" not in values:
        raise ValidationError("an input panel CSV is required (--input or config)")
    if "out" not in values:
        raise ValidationError("an output directory is required (--out or config)")
    return RunConfig(**values)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = _config_from_args(args)
            manifest = run_pipeline(cfg)
            stages = ", ".join(entry["name"] for entry in manifest["stages"])
            print(f"run complete: {cfg.out} (stages: {stages})")
            print(f"config hash: {manifest['config_hash']}")
            return 0
        if args.command == "compare":
            report = compare_runs(args.run_a, args.run_b)
            if args.json:
                print(json.dumps(report, indent=2, sort_keys=True))
            else:
                print(format_compare_report(report), end="")
            return 0
    except ValidationError as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    except FlaremapError as error:
        print(f"error: {error}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
