"""Dissimilarity measures, the pairwise dissimilarity matrix, and the PCA filter.

Five metrics are supported: cosine, Euclidean, correlation (1 - Pearson),
min-complement (1 minus the sum of coordinate-wise minima of sum-normalized
copies), and Mahalanobis with a Tikhonov-regularized sample covariance of the
whole point cloud. Matrix entries are computed from a canonical lower triangle
and mirrored, so symmetry is exact regardless of evaluation order.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .errors import CacheError, MetricDomainError, ValidationError, ZeroVarianceError
from .panel import PointCloud

# Rows are processed in fixed-size blocks so results do not depend on the
# worker count.
_BLOCK_ROWS = 512


class MetricKind(Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    CORRELATION = "correlation"
    MIN_COMPLEMENT = "mincomplement"
    MAHALANOBIS = "mahalanobis"


@dataclass(frozen=True)
class Metric:
    """A metric choice; `mahalanobis_lambda` is the Tikhonov term (> 0).

    When the kind is Mahalanobis and no lambda is given, the default
    1e-6 * trace(cov) / dimension is used at matrix build time.
    """

    kind: MetricKind
    mahalanobis_lambda: float | None = None

    def __post_init__(self):
        if self.mahalanobis_lambda is not None:
            if self.kind is not MetricKind.MAHALANOBIS:
                raise ValidationError("lambda is only meaningful for the Mahalanobis metric")
            if not self.mahalanobis_lambda > 0:
                raise ValidationError(
                    f"lambda must be > 0, got {self.mahalanobis_lambda}"
                )

    @classmethod
    def parse(cls, name: str, mahalanobis_lambda: float | None = None) -> "Metric":
        try:
            kind = MetricKind(name.lower())
        except ValueError:
            choices = ", ".join(k.value for k in MetricKind)
            raise ValidationError(f"unknown metric {name!r}; choose one of {choices}") from None
        if kind is not MetricKind.MAHALANOBIS:
            return cls(kind)
        return cls(kind, mahalanobis_lambda)

    def descriptor(self) -> str:
        if self.kind is MetricKind.MAHALANOBIS:
            lam = "auto" if self.mahalanobis_lambda is None else repr(self.mahalanobis_lambda)
            return f"mahalanobis(lambda={lam})"
        return self.kind.value


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric nonnegative matrix of pairwise dissimilarities, zero diagonal."""

    values: np.ndarray
    metric: Metric

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError("dissimilarity matrix must be square")
        if not np.isfinite(v).all():
            raise ValidationError("dissimilarity matrix has non-finite entries")
        if (v < 0).any():
            raise ValidationError("dissimilarity matrix has negative entries")
        if np.diagonal(v).any():
            raise ValidationError("dissimilarity matrix diagonal must be exactly zero")
        if not np.array_equal(v, v.T):
            raise ValidationError("dissimilarity matrix must be exactly symmetric")

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FilterImage:
    """Low-dimensional projection of a cloud onto its leading principal axes."""

    coords: np.ndarray
    axes: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        d = self.axes.shape[0]
        gram = self.axes @ self.axes.T
        if not np.allclose(gram, np.eye(d), atol=1e-10):
            raise ValidationError("principal axes are not orthonormal within 1e-10")
        if self.coords.shape[1] != d:
            raise ValidationError("image dimension must match the number of axes")

    @property
    def dims(self) -> int:
        return self.axes.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Map image coordinates back into the original space."""
        return self.mean + self.coords @ self.axes


def mahalanobis_whitener(points: np.ndarray, lam: float | None = None) -> np.ndarray:
    """Lower Cholesky factor of cov(points) + lambda * I.

    Mahalanobis distance between a and b is then the Euclidean norm of
    solve(L, a - b). The default lambda is 1e-6 * trace(cov) / dimension.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 2:
        raise ValidationError("Mahalanobis needs at least 2 points to estimate covariance")
    cov = np.cov(points, rowvar=False)
    cov = np.atleast_2d(cov)
    if lam is None:
        trace = float(np.trace(cov))
        if trace <= 0:
            raise ValidationError("covariance trace is zero; no default lambda exists")
        lam = 1e-6 * trace / cov.shape[0]
    cov = cov + lam * np.eye(cov.shape[0])
    return cholesky(cov, lower=True)


def _cosine_like(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    sim = float(np.dot(a, b)) / (na * nb)
    return max(0.0, 1.0 - sim)


def distance(
    a: np.ndarray,
    b: np.ndarray,
    metric: Metric,
    whitener: np.ndarray | None = None,
) -> float:
    """Dissimilarity between two vectors under `metric`.

    Cosine and min-complement require nonzero input (nonzero sum for
    min-complement); correlation requires non-constant input. Mahalanobis
    requires a `whitener` from mahalanobis_whitener().
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    kind = metric.kind
    if kind is MetricKind.EUCLIDEAN:
        return float(np.linalg.norm(a - b))
    if kind is MetricKind.COSINE:
        if not a.any() or not b.any():
            raise MetricDomainError("cosine distance is undefined for zero vectors")
        return _cosine_like(a, b)
    if kind is MetricKind.CORRELATION:
        ac = a - a.mean()
        bc = b - b.mean()
        if not ac.any() or not bc.any():
            raise MetricDomainError("correlation distance is undefined for constant vectors")
        return _cosine_like(ac, bc)
    if kind is MetricKind.MIN_COMPLEMENT:
        sa = float(a.sum())
        sb = float(b.sum())
        if sa == 0.0 or sb == 0.0:
            raise MetricDomainError("min-complement distance is undefined for zero-sum vectors")
        return max(0.0, 1.0 - float(np.minimum(a / sa, b / sb).sum()))
    if kind is MetricKind.MAHALANOBIS:
        if whitener is None:
            raise ValidationError("Mahalanobis distance needs a whitener; see mahalanobis_whitener()")
        z = solve_triangular(whitener, a - b, lower=True)
        return float(np.sqrt(z @ z))
    raise ValidationError(f"unknown metric kind {kind!r}")


def _domain_violations(cloud: PointCloud, metric: Metric) -> tuple:
    x = cloud.points
    kind = metric.kind
    if kind is MetricKind.COSINE:
        bad = ~x.any(axis=1)
        reason = "zero vectors under cosine"
    elif kind is MetricKind.MIN_COMPLEMENT:
        bad = x.sum(axis=1) == 0.0
        reason = "zero-sum vectors under min-complement"
    elif kind is MetricKind.CORRELATION:
        bad = ~(x - x.mean(axis=1, keepdims=True)).any(axis=1)
        reason = "constant vectors under correlation"
    else:
        return (), ""
    return tuple(cloud.labels[i] for i in np.nonzero(bad)[0]), reason


def dissimilarity_matrix(
    cloud: PointCloud, metric: Metric, workers: int = 1
) -> DissimilarityMatrix:
    """Pairwise dissimilarities for a whole cloud.

    Metric preconditions are checked for every point before any computation;
    violations abort with the offending point labels. Rows are filled in fixed
    blocks (optionally across threads) and the strict lower triangle is
    mirrored, so the output is identical for any worker count.
    """
    if cloud.n_points == 0:
        raise ValidationError("cannot build a dissimilarity matrix for an empty cloud")
    offenders, reason = _domain_violations(cloud, metric)
    if offenders:
        raise MetricDomainError(f"{len(offenders)} points are {reason}", labels=offenders)
    n = cloud.n_points
    x = cloud.points
    if n == 1:
        return DissimilarityMatrix(np.zeros((1, 1)), metric)

    kind = metric.kind
    if kind is MetricKind.COSINE:
        base = x / np.linalg.norm(x, axis=1, keepdims=True)
        fill = lambda rows: 1.0 - base[rows] @ base.T
    elif kind is MetricKind.CORRELATION:
        xc = x - x.mean(axis=1, keepdims=True)
        base = xc / np.linalg.norm(xc, axis=1, keepdims=True)
        fill = lambda rows: 1.0 - base[rows] @ base.T
    elif kind is MetricKind.MIN_COMPLEMENT:
        base = x / x.sum(axis=1, keepdims=True)
        # 1 - sum(min) equals half the L1 distance for sum-one vectors.
        fill = lambda rows: 0.5 * cdist(base[rows], base, metric="cityblock")
    elif kind is MetricKind.EUCLIDEAN:
        base = x
        fill = None
    elif kind is MetricKind.MAHALANOBIS:
        whitener = mahalanobis_whitener(x, metric.mahalanobis_lambda)
        base = solve_triangular(whitener, x.T, lower=True).T
        fill = None
    else:
        raise ValidationError(f"unknown metric kind {kind!r}")
    if fill is None:
        sq = np.einsum("ij,ij->i", base, base)
        def fill(rows):
            d2 = sq[rows, None] + sq[None, :] - 2.0 * (base[rows] @ base.T)
            return np.sqrt(np.maximum(d2, 0.0))

    out = np.empty((n, n), dtype=np.float64)
    blocks = [slice(s, min(s + _BLOCK_ROWS, n)) for s in range(0, n, _BLOCK_ROWS)]

    def run(block: slice) -> None:
        out[block] = fill(block)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))
    else:
        for block in blocks:
            run(block)

    np.maximum(out, 0.0, out=out)
    np.fill_diagonal(out, 0.0)
    upper = np.triu_indices(n, k=1)
    out[upper] = out.T[upper]
    return DissimilarityMatrix(out, metric)


def pca_filter(cloud: PointCloud, dims: int = 2) -> FilterImage:
    """Project a cloud onto its top `dims` principal axes.

    Axes are the leading right singular vectors of the mean-centered data,
    ordered by singular value, each flipped so its largest-magnitude
    coordinate is positive. Raises ZeroVarianceError when all points coincide.
    """
    x = cloud.points
    n, dim = x.shape
    if not 1 <= dims <= min(n, dim):
        raise ValidationError(f"filter dims {dims} outside [1, {min(n, dim)}]")
    if np.all(x == x[0]):
        raise ZeroVarianceError("zero variance: all points are identical")
    mean = x.mean(axis=0)
    centered = x - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[0] == 0.0:
        raise ZeroVarianceError("zero variance: all points are identical")
    axes = vt[:dims].copy()
    for k in range(dims):
        anchor = int(np.argmax(np.abs(axes[k])))
        if axes[k, anchor] < 0:
            axes[k] = -axes[k]
    coords = centered @ axes.T
    return FilterImage(coords, axes, mean)


_CACHE_MAGIC = b"FMDM"
_CACHE_VERSION = 1


def write_matrix_cache(matrix: DissimilarityMatrix, path: str | Path) -> None:
    """Persist a matrix: header (magic, version, N, metric descriptor) then the
    row-major strict lower triangle as little-endian float64."""
    path = Path(path)
    desc = matrix.metric.descriptor().encode("utf-8")
    n = matrix.size
    tri = matrix.values[np.tril_indices(n, k=-1)].astype("<f8")
    with path.open("wb") as handle:
        handle.write(_CACHE_MAGIC)
        handle.write(struct.pack("<IQI", _CACHE_VERSION, n, len(desc)))
        handle.write(desc)
        handle.write(tri.tobytes())


def read_matrix_cache(path: str | Path) -> tuple[DissimilarityMatrix, str]:
    """Load a cached matrix; returns it with the stored metric descriptor."""
    path = Path(path)
    with path.open("rb") as handle:
        magic = handle.read(4)
        if magic != _CACHE_MAGIC:
            raise CacheError(f"{path} is not a dissimilarity cache (bad magic)")
        header = handle.read(16)
        if len(header) != 16:
            raise CacheError(f"{path}: truncated header")
        version, n, desc_len = struct.unpack("<IQI", header)
        if version != _CACHE_VERSION:
            raise CacheError(f"{path}: unsupported cache version {version}")
        desc = handle.read(desc_len).decode("utf-8")
        expected = n * (n - 1) // 2
        tri = np.frombuffer(handle.read(expected * 8), dtype="<f8")
        if tri.shape[0] != expected:
            raise CacheError(f"{path}: truncated payload")
    values = np.zeros((n, n), dtype=np.float64)
    values[np.tril_indices(n, k=-1)] = tri
    values = values + values.T
    metric = _metric_from_descriptor(desc)
    return DissimilarityMatrix(values, metric), desc


def _metric_from_descriptor(desc: str) -> Metric:
    if desc.startswith("mahalanobis(lambda="):
        inner = desc[len("mahalanobis(lambda="):-1]
        lam = None if inner == "auto" else float(inner)
        return Metric(MetricKind.MAHALANOBIS, lam)
    return Metric.parse(desc)
