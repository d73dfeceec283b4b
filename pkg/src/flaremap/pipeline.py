"""End-to-end orchestration: config, staged run with manifest, and run diffs.

A run executes ingest -> window -> rescale -> matrix -> filter -> mapper ->
flare census, then optional clustering baselines and outcome regressions, and
writes every artifact plus a manifest (config hash, stage timings, row
counts). One run owns one output directory; prior runs are never mutated.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import export
from .baselines import cluster_table, kmeans, kmedoids
from .errors import FlaremapError, PipelineStageError, ValidationError
from .flares import flare_census
from .geometry import (
    Metric,
    MetricKind,
    dissimilarity_matrix,
    pca_filter,
    read_matrix_cache,
    write_matrix_cache,
)
from .mapper import CoverSpec, assemble_graph, build_cover, local_cluster
from .panel import ColumnSchema, Rescale, TransformSpec, ingest_csv, rescale as rescale_panel, moving_window
from .regression import (
    f_test_restriction,
    firm_outcomes,
    flare_regression,
    load_outcomes_csv,
)

# Fields that change what is computed; the rest only say where files go.
_SEMANTIC_FIELDS = (
    "input",
    "outcomes",
    "entity_col",
    "period_col",
    "category_col",
    "count_col",
    "window",
    "rescale",
    "metric",
    "mahalanobis_lambda",
    "filter_dims",
    "cubes",
    "overlap",
    "bins",
    "baseline_k",
    "seed",
)


@dataclass(frozen=True)
class RunConfig:
    input: str
    out: str
    outcomes: str | None = None
    entity_col: str = "entity"
    period_col: str = "period"
    category_col: str = "category"
    count_col: str = "count"
    window: int = 5
    rescale: str = "log"
    metric: str = "cosine"
    mahalanobis_lambda: float | None = None
    filter_dims: int = 2
    cubes: int = 20
    overlap: float = 0.5
    bins: int = 10
    baseline_k: int | None = None
    seed: int = 0
    workers: int = 1
    cache_dir: str | None = None

    def validate(self) -> None:
        if not Path(self.input).is_file():
            raise ValidationError(f"input file {self.input} does not exist")
        if self.outcomes is not None and not Path(self.outcomes).is_file():
            raise ValidationError(f"outcomes file {self.outcomes} does not exist")
        if self.window < 1:
            raise ValidationError(f"window must be >= 1, got {self.window}")
        try:
            Rescale(self.rescale)
        except ValueError:
            raise ValidationError(f"rescale must be log or share, got {self.rescale!r}") from None
        Metric.parse(self.metric, self.mahalanobis_lambda)
        if self.filter_dims < 1:
            raise ValidationError(f"filter dims must be >= 1, got {self.filter_dims}")
        if self.cubes < 1:
            raise ValidationError(f"cubes must be >= 1, got {self.cubes}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValidationError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.bins < 2:
            raise ValidationError(f"bins must be >= 2, got {self.bins}")
        if self.baseline_k is not None and self.baseline_k < 1:
            raise ValidationError(f"baseline k must be >= 1, got {self.baseline_k}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")

    def canonical(self) -> dict:
        return {field: getattr(self, field) for field in _SEMANTIC_FIELDS}

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _metric(cfg: RunConfig) -> Metric:
    return Metric.parse(cfg.metric, cfg.mahalanobis_lambda)


def _cache_key(cfg: RunConfig) -> str:
    digest = hashlib.sha256()
    digest.update(Path(cfg.input).read_bytes())
    descriptor = {
        "window": cfg.window,
        "rescale": cfg.rescale,
        "metric": _metric(cfg).descriptor(),
        "columns": [cfg.entity_col, cfg.period_col, cfg.category_col, cfg.count_col],
    }
    digest.update(json.dumps(descriptor, sort_keys=True).encode("utf-8"))
    return digest.hexdigest()


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute every stage and write artifacts plus manifest.json into cfg.out.

    Any stage failure halts the run, writes an incomplete manifest naming the
    stage, and re-raises as PipelineStageError. Artifact writes are atomic, so
    no partial files are left behind.
    """
    cfg.validate()
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "config": cfg.as_dict(),
        "config_hash": cfg.config_hash(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "stages": [],
        "outputs": {},
        "status": "incomplete",
    }
    stage_name = "setup"

    def stage(name: str):
        nonlocal stage_name
        stage_name = name
        return time.perf_counter()

    def done(started: float, **counts) -> None:
        manifest["stages"].append(
            {"name": stage_name, "seconds": round(time.perf_counter() - started, 6), "counts": counts}
        )

    try:
        started = stage("ingest")
        schema = ColumnSchema(cfg.entity_col, cfg.period_col, cfg.category_col, cfg.count_col)
        panel = ingest_csv(cfg.input, schema)
        done(
            started,
            counts=len(panel.counts),
            entities=len(panel.entities),
            periods=panel.n_periods,
            categories=len(panel.categories),
        )

        started = stage("window")
        windowed = moving_window(panel, cfg.window)
        done(started, counts=len(windowed.counts), periods=windowed.n_periods)

        started = stage("rescale")
        spec = TransformSpec(window=cfg.window, rescale=Rescale(cfg.rescale))
        cloud, drops = rescale_panel(windowed, spec)
        export.write_drops_jsonl(drops, out_dir / "drops.jsonl")
        manifest["outputs"]["drops"] = "drops.jsonl"
        done(started, points=cloud.n_points, dropped=len(drops))

        started = stage("matrix")
        metric = _metric(cfg)
        matrix = None
        cache_state = "disabled"
        cache_path = None
        if cfg.cache_dir is not None:
            cache_dir = Path(cfg.cache_dir)
            cache_dir.mkdir(parents=True, exist_ok=True)
            cache_path = cache_dir / f"{_cache_key(cfg)}.dmx"
            if cache_path.is_file():
                try:
                    cached, descriptor = read_matrix_cache(cache_path)
                    if descriptor == metric.descriptor() and cached.size == cloud.n_points:
                        matrix = cached
                        cache_state = "hit"
                except FlaremapError:
                    matrix = None
            if matrix is None and cache_state != "hit":
                cache_state = "miss"
        if matrix is None:
            matrix = dissimilarity_matrix(cloud, metric, workers=cfg.workers)
            if cache_path is not None:
                write_matrix_cache(matrix, cache_path)
        done(started, n=matrix.size, cache=cache_state)

        started = stage("filter")
        image = pca_filter(cloud, cfg.filter_dims)
        done(started, dims=image.dims)

        started = stage("mapper")
        elements = build_cover(image, CoverSpec(cfg.cubes, cfg.overlap))
        if cfg.workers > 1 and len(elements) > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                clustered = list(
                    pool.map(lambda el: (el, local_cluster(el, matrix, bins=cfg.bins)), elements)
                )
        else:
            clustered = [(el, local_cluster(el, matrix, bins=cfg.bins)) for el in elements]
        graph = assemble_graph(clustered, point_labels=cloud.labels, n_points=cloud.n_points)
        export.write_graph_json(graph, out_dir / "graph.json")
        export.write_graph_dot(graph, out_dir / "graph.dot")
        export.write_graph_html(graph, image, out_dir / "graph.html")
        manifest["outputs"]["graph_json"] = "graph.json"
        manifest["outputs"]["graph_dot"] = "graph.dot"
        manifest["outputs"]["graph_html"] = "graph.html"
        done(
            started,
            elements=len(elements),
            nodes=graph.n_nodes,
            edges=graph.n_edges,
            components=graph.component_count(),
        )

        started = stage("census")
        census = flare_census(graph, entities=panel.entities)
        export.write_census_csv(census, out_dir / "census.csv")
        export.write_census_histogram_json(census, out_dir / "census_histogram.json")
        manifest["outputs"]["census_csv"] = "census.csv"
        manifest["outputs"]["census_histogram"] = "census_histogram.json"
        done(
            started,
            entities=len(census.reports),
            absent=len(census.absent),
            **census.type_counts(),
        )

        if cfg.baseline_k is not None:
            started = stage("baselines")
            means = kmeans(cloud, cfg.baseline_k, seed=cfg.seed)
            medoids = kmedoids(matrix, cfg.baseline_k, seed=cfg.seed)
            means_table = cluster_table(means, cloud.labels)
            medoids_table = cluster_table(medoids, cloud.labels)
            export.write_cluster_table_csv(means_table, out_dir / "clusters_kmeans.csv")
            export.write_cluster_table_json(means_table, out_dir / "clusters_kmeans.json")
            export.write_cluster_table_csv(medoids_table, out_dir / "clusters_kmedoids.csv")
            export.write_cluster_table_json(medoids_table, out_dir / "clusters_kmedoids.json")
            manifest["outputs"]["clusters_kmeans"] = "clusters_kmeans.csv"
            manifest["outputs"]["clusters_kmedoids"] = "clusters_kmedoids.csv"
            done(started, k=cfg.baseline_k, kmeans_cost=means.cost, kmedoids_cost=medoids.cost)

        if cfg.outcomes is not None:
            started = stage("regressions")
            outcomes = firm_outcomes(panel, load_outcomes_csv(cfg.outcomes))
            results = {}
            f_tests = {}
            for outcome in ("revenue", "ebit", "market_value"):
                variants = {
                    f"{outcome}:flare": dict(include_flare=True, include_count=False),
                    f"{outcome}:count": dict(include_flare=False, include_count=True),
                    f"{outcome}:both": dict(include_flare=True, include_count=True),
                }
                for key, kwargs in variants.items():
                    results[key] = flare_regression(census, outcomes, outcome=outcome, **kwargs)
                test = f_test_restriction(results[f"{outcome}:both"], results[f"{outcome}:count"], q=2)
                f_tests[outcome] = {
                    "statistic": test.statistic,
                    "p_value": test.p_value,
                    "df": [test.df_num, test.df_den],
                }
            export.write_regression_json(results, f_tests, out_dir / "regressions.json")
            text = []
            for outcome in ("revenue", "ebit", "market_value"):
                subset = {k.split(":")[1]: v for k, v in results.items() if k.startswith(outcome)}
                text.append(f"log({outcome})")
                text.append(export.format_regression_table(subset))
                test = f_tests[outcome]
                text.append(
                    f"F({test['df'][0]}, {test['df'][1]}) flare restriction = "
                    f"{test['statistic']:.2f} (p = {test['p_value']:.4g})\n"
                )
            export.write_text_atomic(out_dir / "regressions.txt", "\n".join(text))
            manifest["outputs"]["regressions_json"] = "regressions.json"
            manifest["outputs"]["regressions_txt"] = "regressions.txt"
            done(started, models=len(results))

        manifest["status"] = "complete"
    except BaseException as error:
        manifest["status"] = "failed"
        manifest["failed_stage"] = stage_name
        manifest["error"] = str(error)
        export.write_text_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if isinstance(error, FlaremapError) and not isinstance(error, PipelineStageError):
            raise PipelineStageError(stage_name, error) from error
        raise
    export.write_text_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    with path.open(encoding="utf-8") as handle:
        return json.load(handle)


def _stage_counts(manifest: dict, stage: str) -> dict:
    for entry in manifest["stages"]:
        if entry["name"] == stage:
            return entry["counts"]
    return {}


def compare_runs(path_a: str | Path, path_b: str | Path) -> dict:
    """Diff two completed runs: per-entity flare lengths and graph summaries."""
    manifest_a = load_manifest(path_a)
    manifest_b = load_manifest(path_b)
    for name, manifest in (("first", manifest_a), ("second", manifest_b)):
        if manifest.get("status") != "complete":
            raise ValidationError(f"{name} manifest is not a completed run")
    dir_a = Path(path_a) if Path(path_a).is_dir() else Path(path_a).parent
    dir_b = Path(path_b) if Path(path_b).is_dir() else Path(path_b).parent
    census_a = export.read_census_csv(dir_a / manifest_a["outputs"]["census_csv"])
    census_b = export.read_census_csv(dir_b / manifest_b["outputs"]["census_csv"])
    shared = sorted(set(census_a) & set(census_b))
    only_a = sorted(set(census_a) - set(census_b))
    only_b = sorted(set(census_b) - set(census_a))
    changes = [
        {"entity": entity, "a": census_a[entity], "b": census_b[entity]}
        for entity in shared
        if census_a[entity] != census_b[entity]
    ]
    mapper_a = _stage_counts(manifest_a, "mapper")
    mapper_b = _stage_counts(manifest_b, "mapper")
    report = {
        "config_hash": [manifest_a["config_hash"], manifest_b["config_hash"]],
        "flare_length_changes": changes,
        "entities_compared": len(shared),
        "entities_only_in_a": only_a,
        "entities_only_in_b": only_b,
        "graph": {
            key: [mapper_a.get(key), mapper_b.get(key)]
            for key in ("nodes", "edges", "components")
        },
        "warning": (
            "entity sets differ; compared the intersection" if (only_a or only_b) else None
        ),
    }
    return report


def format_compare_report(report: dict) -> str:
    lines = []
    if report["warning"]:
        lines.append(f"warning: {report['warning']}")
    hashes = report["config_hash"]
    lines.append(f"config hashes: {hashes[0][:12]} vs {hashes[1][:12]}")
    graph = report["graph"]
    lines.append(
        "graph: nodes {0} -> {1}, edges {2} -> {3}, components {4} -> {5}".format(
            graph["nodes"][0], graph["nodes"][1],
            graph["edges"][0], graph["edges"][1],
            graph["components"][0], graph["components"][1],
        )
    )
    changes = report["flare_length_changes"]
    if not changes:
        lines.append(f"flare lengths: no changes across {report['entities_compared']} entities")
    else:
        lines.append(f"flare lengths: {len(changes)} changed of {report['entities_compared']}")
        for change in changes:
            lines.append(f"  {change['entity']}: {change['a']} -> {change['b']}")
    return "\n".join(lines) + "\n"
