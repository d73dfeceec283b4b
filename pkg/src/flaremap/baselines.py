"""Global clustering baselines: seeded k-means and PAM-style k-medoids.

Both produce a full assignment of points to clusters 1..k plus roster tables
(firm-year counts, unique entities, and the longest-appearing entities per
cluster). k-means runs Lloyd's algorithm with k-means++ initialization on the
point vectors; k-medoids runs a greedy build followed by first-improvement
swaps over an arbitrary dissimilarity matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError
from .geometry import DissimilarityMatrix
from .panel import PointCloud


@dataclass(frozen=True)
class ClusteringResult:
    """Assignment of every point to one of clusters 1..k."""

    method: str
    k: int
    assignment: tuple[int, ...]
    cost: float
    medoids: tuple[int, ...] | None = None

    def __post_init__(self):
        used = set(self.assignment)
        if not used <= set(range(1, self.k + 1)):
            raise ValidationError("cluster ids must lie in 1..k")

    def members(self, cluster: int) -> list[int]:
        return [i for i, c in enumerate(self.assignment) if c == cluster]


def _as_points(data: PointCloud | np.ndarray) -> np.ndarray:
    if isinstance(data, PointCloud):
        return data.points
    return np.asarray(data, dtype=np.float64)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total == 0.0:
            # All remaining mass sits on already-chosen points; take the
            # lowest unchosen index.
            for i in range(n):
                if i not in chosen:
                    chosen.append(i)
                    break
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, ((x - x[chosen[-1]]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans(
    data: PointCloud | np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    init_centers: np.ndarray | None = None,
) -> ClusteringResult:
    """Lloyd's algorithm with k-means++ initialization from `seed`.

    A cluster that empties during iteration is reseeded at the point farthest
    from its current center. Deterministic given the seed.
    """
    x = _as_points(data)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")
    if init_centers is not None:
        centers = np.asarray(init_centers, dtype=np.float64).copy()
        if centers.shape != (k, x.shape[1]):
            raise ValidationError("init_centers must be k x dimension")
    else:
        centers = _kmeanspp(x, k, np.random.default_rng(seed))
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = cdist(x, centers, metric="sqeuclidean")
        new_assign = d2.argmin(axis=1)
        nearest = d2[np.arange(n), new_assign]
        for cluster in range(k):
            if not (new_assign == cluster).any():
                counts = np.bincount(new_assign, minlength=k)
                # Only steal from clusters that keep at least one point.
                eligible = counts[new_assign] > 1
                ranked = np.where(eligible, nearest, -1.0)
                farthest = int(ranked.argmax())
                centers[cluster] = x[farthest]
                new_assign[farthest] = cluster
                nearest[farthest] = 0.0
        if (new_assign == assign).all():
            break
        assign = new_assign
        for cluster in range(k):
            centers[cluster] = x[assign == cluster].mean(axis=0)
    d2 = cdist(x, centers, metric="sqeuclidean")
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    return ClusteringResult(
        method="kmeans",
        k=k,
        assignment=tuple(int(c) + 1 for c in assign),
        cost=inertia,
    )


def _medoid_cost(d: np.ndarray, medoids: list[int]) -> float:
    return float(d[:, medoids].min(axis=1).sum())


def kmedoids(
    data: DissimilarityMatrix | np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
) -> ClusteringResult:
    """PAM over a dissimilarity matrix: greedy build, first-improvement swap.

    Ties always resolve to the lowest point id, and the greedy build has no
    random element, so the seed does not influence the result; the parameter
    is kept for interface symmetry with kmeans.
    """
    del seed
    d = data.values if isinstance(data, DissimilarityMatrix) else np.asarray(data, dtype=np.float64)
    n = d.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")
    medoids = [int(d.sum(axis=0).argmin())]
    nearest = d[:, medoids[0]].copy()
    while len(medoids) < k:
        gains = np.maximum(nearest[:, None] - d, 0.0).sum(axis=0)
        gains[medoids] = -1.0
        medoids.append(int(gains.argmax()))
        nearest = np.minimum(nearest, d[:, medoids[-1]])
    cost = _medoid_cost(d, medoids)
    for _ in range(max_iter):
        improved = False
        chosen = set(medoids)
        for position, medoid in sorted(enumerate(medoids), key=lambda e: e[1]):
            for candidate in range(n):
                if candidate in chosen:
                    continue
                trial = list(medoids)
                trial[position] = candidate
                trial_cost = _medoid_cost(d, trial)
                if trial_cost < cost:
                    medoids = trial
                    cost = trial_cost
                    improved = True
                    break
            if improved:
                break
        if not improved:
            break
    medoids = sorted(medoids)
    assign = d[:, medoids].argmin(axis=1)
    return ClusteringResult(
        method="kmedoids",
        k=k,
        assignment=tuple(int(c) + 1 for c in assign),
        cost=_medoid_cost(d, medoids),
        medoids=tuple(medoids),
    )


@dataclass(frozen=True)
class ClusterRow:
    cluster: int
    firm_years: int
    unique_entities: int
    representatives: tuple[str, ...]


@dataclass(frozen=True)
class ClusterTable:
    method: str
    rows: tuple[ClusterRow, ...]
    total_firm_years: int
    total_unique_entities: int


def cluster_table(
    result: ClusteringResult,
    labels: tuple[tuple[str, int], ...],
    max_representatives: int = 6,
) -> ClusterTable:
    """Roster table of a clustering over labeled points.

    Rows are sorted by firm-year count descending. Representatives are the
    entities present for the most distinct periods within the cluster, ties
    by entity id. An entity spanning several clusters counts once per
    cluster, so the unique-entity total can exceed the entity count.
    """
    if len(labels) != len(result.assignment):
        raise ValidationError("one label per assigned point required")
    per_cluster: dict[int, dict[str, set[int]]] = {c: {} for c in range(1, result.k + 1)}
    sizes = {c: 0 for c in range(1, result.k + 1)}
    for (entity, period), cluster in zip(labels, result.assignment):
        sizes[cluster] += 1
        per_cluster[cluster].setdefault(entity, set()).add(period)
    rows = []
    for cluster in range(1, result.k + 1):
        entities = per_cluster[cluster]
        ranked = sorted(entities.items(), key=lambda e: (-len(e[1]), e[0]))
        rows.append(
            ClusterRow(
                cluster=cluster,
                firm_years=sizes[cluster],
                unique_entities=len(entities),
                representatives=tuple(e for e, _ in ranked[:max_representatives]),
            )
        )
    rows.sort(key=lambda r: (-r.firm_years, r.cluster))
    return ClusterTable(
        method=result.method,
        rows=tuple(rows),
        total_firm_years=len(labels),
        total_unique_entities=sum(r.unique_entities for r in rows),
    )
