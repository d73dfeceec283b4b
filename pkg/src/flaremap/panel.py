"""Sparse entity x period x category count panels and their point-cloud transforms.

A panel stores strictly positive integer counts keyed by (entity, period,
category); absent keys mean zero. Transformation sums counts over a moving
window of periods and then rescales each active entity-period into a dense
vector, either coordinate-wise log(1 + count) or within-point shares.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError


class Rescale(Enum):
    LOG = "log"
    SHARE = "share"


@dataclass(frozen=True)
class ColumnSchema:
    """Column names of a panel CSV file."""

    entity: str = "entity"
    period: str = "period"
    category: str = "category"
    count: str = "count"


@dataclass(frozen=True)
class PanelDataset:
    """Sparse count panel over declared entity/period/category index sets.

    Invariants: every stored count is > 0 (zeros are absent), every key refers
    to a declared entity/period/category, and periods form the contiguous
    integer range [period_min, period_max].
    """

    entities: tuple[str, ...]
    period_min: int
    period_max: int
    categories: tuple[str, ...]
    counts: dict[tuple[str, int, str], int]

    def __post_init__(self):
        if self.period_max < self.period_min:
            raise ValidationError(
                f"empty period range [{self.period_min}, {self.period_max}]"
            )
        entities = set(self.entities)
        categories = set(self.categories)
        if len(entities) != len(self.entities):
            raise ValidationError("duplicate entity ids")
        if len(categories) != len(self.categories):
            raise ValidationError("duplicate category ids")
        for (entity, period, category), value in self.counts.items():
            if value <= 0:
                raise ValidationError(
                    f"count for ({entity}, {period}, {category}) must be positive, got {value}"
                )
            if entity not in entities:
                raise ValidationError(f"undeclared entity {entity!r}")
            if category not in categories:
                raise ValidationError(f"undeclared category {category!r}")
            if not self.period_min <= period <= self.period_max:
                raise ValidationError(
                    f"period {period} outside [{self.period_min}, {self.period_max}]"
                )

    @property
    def periods(self) -> range:
        return range(self.period_min, self.period_max + 1)

    @property
    def n_periods(self) -> int:
        return self.period_max - self.period_min + 1

    @classmethod
    def from_counts(cls, counts: dict[tuple[str, int, str], int]) -> "PanelDataset":
        """Build a dataset whose index sets are derived from the counts."""
        if not counts:
            raise ValidationError("cannot derive index sets from an empty panel")
        entities = tuple(sorted({k[0] for k in counts}))
        periods = sorted({k[1] for k in counts})
        categories = tuple(sorted({k[2] for k in counts}))
        return cls(entities, periods[0], periods[-1], categories, dict(counts))

    def totals_by_entity(self) -> dict[str, int]:
        """Total count per entity, summed over all periods and categories."""
        totals = {e: 0 for e in self.entities}
        for (entity, _, _), value in self.counts.items():
            totals[entity] += value
        return totals


@dataclass(frozen=True)
class TransformSpec:
    """Moving-window width and rescaling protocol for panel transformation."""

    window: int = 5
    rescale: Rescale = Rescale.LOG

    def __post_init__(self):
        if self.window < 1:
            raise ValidationError(f"window must be >= 1, got {self.window}")
        if not isinstance(self.rescale, Rescale):
            raise ValidationError(f"unknown rescale {self.rescale!r}")


@dataclass(frozen=True)
class PointCloud:
    """Dense transformed vectors, one per active (entity, window-start period)."""

    points: np.ndarray
    labels: tuple[tuple[str, int], ...]
    categories: tuple[str, ...]
    rescale: Rescale

    def __post_init__(self):
        if self.points.ndim != 2:
            raise ValidationError("points must be a 2-d array")
        if self.points.shape[0] != len(self.labels):
            raise ValidationError("one label per point required")
        if self.points.shape[1] != len(self.categories):
            raise ValidationError("point dimension must equal category count")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("duplicate (entity, period) labels")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def entities(self) -> tuple[str, ...]:
        return tuple(sorted({entity for entity, _ in self.labels}))


@dataclass(frozen=True)
class DropRecord:
    """An (entity, period) pair that produced no point, with the reason."""

    entity: str
    period: int
    reason: str


def ingest_csv(path: str | Path, schema: ColumnSchema = ColumnSchema()) -> PanelDataset:
    """Read a count panel from CSV.

    Zero-count rows are dropped; duplicate (entity, period, category) rows are
    summed. Malformed rows raise ParseError with their line number; gaps in the
    observed period range raise ValidationError naming the missing periods.
    """
    path = Path(path)
    counts: dict[tuple[str, int, str], int] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        positions = {name.strip(): i for i, name in enumerate(header)}
        needed = (schema.entity, schema.period, schema.category, schema.count)
        missing = [name for name in needed if name not in positions]
        if missing:
            raise ValidationError(
                f"missing columns {missing} in header {header} of {path}"
            )
        cols = tuple(positions[name] for name in needed)
        width = max(cols) + 1
        for line, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < width:
                raise ParseError(f"expected at least {width} fields, got {len(row)}", line=line)
            entity = row[cols[0]].strip()
            if not entity:
                raise ParseError("empty entity id", line=line)
            try:
                period = int(row[cols[1]])
            except ValueError:
                raise ParseError(f"period {row[cols[1]]!r} is not an integer", line=line) from None
            category = row[cols[2]].strip()
            if not category:
                raise ParseError("empty category id", line=line)
            try:
                value = int(row[cols[3]])
            except ValueError:
                raise ParseError(f"count {row[cols[3]]!r} is not an integer", line=line) from None
            if value < 0:
                raise ParseError(f"count {value} is negative", line=line)
            if value == 0:
                continue
            key = (entity, period, category)
            counts[key] = counts.get(key, 0) + value
    if not counts:
        raise ValidationError(f"no positive-count rows in {path}")
    observed = {period for _, period, _ in counts}
    gaps = sorted(set(range(min(observed), max(observed) + 1)) - observed)
    if gaps:
        shown = ", ".join(str(g) for g in gaps[:10])
        raise ValidationError(f"periods are not contiguous: no data for {shown}")
    return PanelDataset.from_counts(counts)


def write_panel_csv(
    dataset: PanelDataset, path: str | Path, schema: ColumnSchema = ColumnSchema()
) -> None:
    """Write a panel back to CSV, rows sorted by (entity, period, category)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([schema.entity, schema.period, schema.category, schema.count])
        for (entity, period, category) in sorted(dataset.counts):
            writer.writerow([entity, period, category, dataset.counts[(entity, period, category)]])


def moving_window(dataset: PanelDataset, window: int) -> PanelDataset:
    """Sum counts over a forward-looking window of `window` periods.

    The result is labeled by window start: counts at (i, t, c) become the sum
    over periods t .. t+window-1, and the period range shrinks to
    [period_min, period_max - window + 1]. Trailing partial windows are not
    produced. A window of 1 is the identity.
    """
    if window < 1:
        raise ValidationError(f"window must be >= 1, got {window}")
    if window > dataset.n_periods:
        raise ValidationError(
            f"window {window} exceeds the {dataset.n_periods}-period span"
        )
    span = dataset.n_periods
    out_span = span - window + 1
    series: dict[tuple[str, str], np.ndarray] = {}
    for (entity, period, category), value in dataset.counts.items():
        key = (entity, category)
        if key not in series:
            series[key] = np.zeros(span, dtype=np.int64)
        series[key][period - dataset.period_min] += value
    counts: dict[tuple[str, int, str], int] = {}
    for (entity, category), values in series.items():
        csum = np.concatenate(([0], np.cumsum(values)))
        sums = csum[window:] - csum[:out_span]
        for offset in np.nonzero(sums)[0]:
            counts[(entity, dataset.period_min + int(offset), category)] = int(sums[offset])
    return PanelDataset(
        entities=dataset.entities,
        period_min=dataset.period_min,
        period_max=dataset.period_min + out_span - 1,
        categories=dataset.categories,
        counts=counts,
    )


def rescale(
    dataset: PanelDataset, spec: TransformSpec
) -> tuple[PointCloud, list[DropRecord]]:
    """Turn a (windowed) panel into a point cloud plus a drop report.

    Log: coordinates are log(1 + count), absent counts contribute 0.
    Share: coordinates are the count's share of the entity-period total.
    Entity-periods with no counts at all produce no point and are reported.
    """
    vectors: dict[tuple[str, int], dict[str, int]] = {}
    for (entity, period, category), value in dataset.counts.items():
        vectors.setdefault((entity, period), {})[category] = value
    labels = tuple(sorted(vectors))
    cat_index = {category: i for i, category in enumerate(dataset.categories)}
    points = np.zeros((len(labels), len(dataset.categories)), dtype=np.float64)
    drops: list[DropRecord] = []
    for row, label in enumerate(labels):
        for category, value in vectors[label].items():
            points[row, cat_index[category]] = value
    if spec.rescale is Rescale.LOG:
        points = np.log1p(points)
    else:
        totals = points.sum(axis=1)
        keep = totals > 0
        # Unreachable under the positive-count invariant; kept as a guard.
        for row in np.nonzero(~keep)[0]:
            entity, period = labels[int(row)]
            drops.append(DropRecord(entity, period, "zero-total"))
        points = points[keep] / totals[keep, None]
        labels = tuple(label for row, label in enumerate(labels) if keep[row])
    present = set(labels)
    for entity in dataset.entities:
        for period in dataset.periods:
            if (entity, period) not in present:
                drops.append(DropRecord(entity, period, "no-counts-in-window"))
    drops.sort(key=lambda d: (d.entity, d.period))
    cloud = PointCloud(points, labels, dataset.categories, spec.rescale)
    return cloud, drops


def transform(
    dataset: PanelDataset, spec: TransformSpec
) -> tuple[PointCloud, list[DropRecord]]:
    """moving_window followed by rescale, under one TransformSpec."""
    return rescale(moving_window(dataset, spec.window), spec)
