"""Shape-graph construction over a filtered point cloud.

The graph is built in three stages: cover the filter image with an overlapping
axis-aligned grid, single-linkage-cluster the pre-image of each cover element
using the gap heuristic to pick the cluster count, and connect clusters that
share points. Edges all carry weight 1.
"""

from __future__ import annotations

import itertools
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import squareform

from .errors import InternalInvariantError, ValidationError
from .geometry import DissimilarityMatrix, FilterImage, Metric, dissimilarity_matrix, pca_filter
from .panel import PointCloud

DEFAULT_BINS = 10


@dataclass(frozen=True)
class CoverSpec:
    """Grid resolution (cubes per dimension) and overlap fraction in [0, 1)."""

    cubes: int = 20
    overlap: float = 0.5

    def __post_init__(self):
        if self.cubes < 1:
            raise ValidationError(f"cubes must be >= 1, got {self.cubes}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValidationError(f"overlap must be in [0, 1), got {self.overlap}")


@dataclass(frozen=True)
class CoverElement:
    """One grid box of the cover and the ids of the points it captures."""

    index: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    members: tuple[int, ...]


@dataclass(frozen=True)
class MapperNode:
    """One local cluster: its owning cover element and its member point ids."""

    id: int
    element: tuple[int, ...]
    members: tuple[int, ...]


@dataclass(frozen=True)
class MapperGraph:
    """Nodes are local clusters; an edge joins nodes sharing a point.

    `point_labels` carries the (entity, period) label of each point id when the
    graph came from a labeled cloud.
    """

    nodes: tuple[MapperNode, ...]
    edges: tuple[tuple[int, int], ...]
    point_labels: tuple[tuple[str, int], ...] | None = None

    def __post_init__(self):
        ids = [node.id for node in self.nodes]
        if ids != list(range(len(ids))):
            raise ValidationError("node ids must be 0..n-1 in order")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise ValidationError(f"self-loop at node {u}")
            if not (0 <= u < len(ids) and 0 <= v < len(ids)):
                raise ValidationError(f"edge ({u}, {v}) references a missing node")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValidationError(f"duplicate edge {key}")
            seen.add(key)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> dict[int, frozenset[int]]:
        neighbors: dict[int, set[int]] = {node.id: set() for node in self.nodes}
        for u, v in self.edges:
            neighbors[u].add(v)
            neighbors[v].add(u)
        return {node: frozenset(adj) for node, adj in neighbors.items()}

    @cached_property
    def node_entities(self) -> dict[int, frozenset[str]]:
        if self.point_labels is None:
            raise ValidationError("graph has no point labels; entities are unknown")
        return {
            node.id: frozenset(self.point_labels[p][0] for p in node.members)
            for node in self.nodes
        }

    def node_mean_period(self, node_id: int) -> float:
        if self.point_labels is None:
            raise ValidationError("graph has no point labels; periods are unknown")
        periods = [self.point_labels[p][1] for p in self.nodes[node_id].members]
        return float(np.mean(periods))

    def component_count(self) -> int:
        seen: set[int] = set()
        components = 0
        for node in self.nodes:
            if node.id in seen:
                continue
            components += 1
            queue = deque([node.id])
            seen.add(node.id)
            while queue:
                current = queue.popleft()
                for nxt in self.adjacency[current]:
                    if nxt not in seen:
                        seen.add(nxt)
                        queue.append(nxt)
        return components

    def cycle_rank(self) -> int:
        """Independent cycles: edges - nodes + components."""
        return self.n_edges - self.n_nodes + self.component_count()

    def degrees(self) -> dict[int, int]:
        return {node: len(adj) for node, adj in self.adjacency.items()}


def build_cover(image: FilterImage, spec: CoverSpec) -> list[CoverElement]:
    """Overlapping grid cover of the filter image.

    Per dimension the base interval length is range/cubes; boxes are centered
    on the base grid and stretched to half-width (length/2)/(1-overlap), with
    closed-box membership. A zero-range dimension degenerates to one interval.
    Empty elements are dropped; every point lands in at least one element.
    """
    coords = image.coords
    n_points, n_dims = coords.shape
    if n_points == 0:
        raise ValidationError("cannot cover an empty image")
    axis_boxes: list[list[tuple[float, float]]] = []
    for k in range(n_dims):
        lo = float(coords[:, k].min())
        hi = float(coords[:, k].max())
        length = (hi - lo) / spec.cubes
        if length == 0.0:
            axis_boxes.append([(lo, hi)])
            continue
        half = (length / 2.0) / (1.0 - spec.overlap)
        centers = lo + (np.arange(spec.cubes) + 0.5) * length
        axis_boxes.append([(float(c - half), float(c + half)) for c in centers])

    axis_masks: list[list[np.ndarray]] = []
    for k, boxes in enumerate(axis_boxes):
        col = coords[:, k]
        masks = [(col >= lo) & (col <= hi) for lo, hi in boxes]
        covered = np.logical_or.reduce(masks)
        if not covered.all():
            # Rounding at the range edge can leave a point outside every
            # closed box; assign such points to the nearest box center.
            lo = float(col.min())
            length = (float(col.max()) - lo) / len(boxes)
            for point in np.nonzero(~covered)[0]:
                nearest = int(np.clip(round((col[point] - lo) / length - 0.5), 0, len(boxes) - 1))
                masks[nearest][point] = True
        axis_masks.append(masks)

    elements: list[CoverElement] = []
    for index in itertools.product(*(range(len(m)) for m in axis_masks)):
        mask = axis_masks[0][index[0]]
        for k in range(1, n_dims):
            mask = mask & axis_masks[k][index[k]]
        members = np.nonzero(mask)[0]
        if members.size == 0:
            continue
        elements.append(
            CoverElement(
                index=index,
                lower=tuple(axis_boxes[k][index[k]][0] for k in range(n_dims)),
                upper=tuple(axis_boxes[k][index[k]][1] for k in range(n_dims)),
                members=tuple(int(p) for p in members),
            )
        )
    return elements


def local_cluster(
    element: CoverElement, matrix: DissimilarityMatrix, bins: int = DEFAULT_BINS
) -> list[tuple[int, ...]]:
    """Partition one cover element's points by single linkage plus the gap rule.

    Merge heights of the single-linkage dendrogram are histogrammed over
    [0, max pairwise distance] into `bins` equal bins; the threshold is the
    left edge of the first empty bin after the first occupied one (leading
    empty bins carry no gap information). Clusters are the connected
    components of the strict distance-below-threshold graph. With no empty
    bin after the data, the element stays one cluster.
    """
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    members = np.asarray(element.members, dtype=np.int64)
    if members.size == 1:
        return [(int(members[0]),)]
    sub = matrix.values[np.ix_(members, members)]
    max_pair = float(sub.max())
    if max_pair == 0.0:
        return [tuple(int(p) for p in members)]
    heights = linkage(squareform(sub, checks=False), method="single")[:, 2]
    counts, edges = np.histogram(heights, bins=bins, range=(0.0, max_pair))
    occupied = np.nonzero(counts)[0]
    first = int(occupied[0])
    empties = np.nonzero(counts[first:] == 0)[0]
    if empties.size == 0:
        return [tuple(int(p) for p in members)]
    threshold = float(edges[first + int(empties[0])])
    _, labels = connected_components(csr_matrix(sub < threshold), directed=False)
    clusters: dict[int, list[int]] = {}
    for local, label in enumerate(labels):
        clusters.setdefault(int(label), []).append(int(members[local]))
    return sorted((tuple(sorted(c)) for c in clusters.values()), key=lambda c: c[0])


def assemble_graph(
    clustered: list[tuple[CoverElement, list[tuple[int, ...]]]],
    point_labels: tuple[tuple[str, int], ...] | None = None,
    n_points: int | None = None,
) -> MapperGraph:
    """Assemble one node per cluster and connect nodes sharing points.

    Node ids follow sorted (element index, smallest member id). Intersections
    are found by inverting the point-to-node map, which only ever compares
    nodes of overlapping elements.
    """
    entries = []
    for element, clusters in clustered:
        union: set[int] = set()
        total = 0
        for cluster in clusters:
            if not cluster:
                raise ValidationError("empty cluster in cover element")
            union.update(cluster)
            total += len(cluster)
        if total != len(union) or union != set(element.members):
            raise ValidationError(
                f"clusters do not partition cover element {element.index}"
            )
        for cluster in clusters:
            entries.append((element.index, cluster))
    entries.sort(key=lambda e: (e[0], e[1][0]))
    nodes = tuple(
        MapperNode(id=i, element=index, members=members)
        for i, (index, members) in enumerate(entries)
    )
    point_nodes: dict[int, list[int]] = {}
    for node in nodes:
        for point in node.members:
            point_nodes.setdefault(point, []).append(node.id)
    if n_points is not None:
        missing = set(range(n_points)) - set(point_nodes)
        if missing:
            raise InternalInvariantError(f"points in no node: {sorted(missing)[:10]}")
    edge_set: set[tuple[int, int]] = set()
    for owners in point_nodes.values():
        for a, b in itertools.combinations(owners, 2):
            edge_set.add((min(a, b), max(a, b)))
    return MapperGraph(nodes=nodes, edges=tuple(sorted(edge_set)), point_labels=point_labels)


def run_mapper(
    cloud: PointCloud,
    metric: Metric,
    filter_dims: int = 2,
    cover: CoverSpec = CoverSpec(),
    bins: int = DEFAULT_BINS,
    workers: int = 1,
    matrix: DissimilarityMatrix | None = None,
    image: FilterImage | None = None,
) -> MapperGraph:
    """Full pipeline from cloud to shape graph; deterministic for fixed inputs.

    A precomputed dissimilarity matrix and/or filter image can be supplied to
    avoid recomputation.
    """
    if cloud.n_points == 0:
        raise ValidationError("cannot run on an empty cloud")
    if cloud.n_points == 1:
        node = MapperNode(id=0, element=(0,) * filter_dims, members=(0,))
        return MapperGraph(nodes=(node,), edges=(), point_labels=cloud.labels)
    if matrix is None:
        matrix = dissimilarity_matrix(cloud, metric, workers=workers)
    elif matrix.size != cloud.n_points:
        raise ValidationError("matrix size does not match the cloud")
    if image is None:
        image = pca_filter(cloud, filter_dims)
    elements = build_cover(image, cover)

    def cluster(element: CoverElement):
        return element, local_cluster(element, matrix, bins=bins)

    if workers > 1 and len(elements) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            clustered = list(pool.map(cluster, elements))
    else:
        clustered = [cluster(element) for element in elements]
    return assemble_graph(clustered, point_labels=cloud.labels, n_points=cloud.n_points)
