"""Per-entity structure of a shape graph: flare signatures, lengths, and types.

Nodes of the graph carry sets of entity ids (a node contains an entity when
any of that entity's points fell into the node's cluster). For an entity i,
the induced subgraph collects every node containing i. Its interior holds the
nodes whose full neighborhoods stay inside the subgraph; the rest is the
boundary. A connected component of the interior is an island when it is a
whole connected component of the ambient graph, and a flare otherwise. Each
component's index is the largest exit distance among its nodes, where the
exit distance of an interior node is its hop distance to the nearest
non-interior node; restricted to the induced subgraph, this equals a
multi-source search seeded at the boundary. Edges have unit weight, so the
search is breadth-first.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import InternalInvariantError, UnknownEntityError, ValidationError
from .mapper import MapperGraph

INFINITE = math.inf


@dataclass(frozen=True)
class MemberGraph:
    """Undirected graph whose nodes carry entity membership sets."""

    adjacency: Mapping[int, frozenset[int]]
    entities: Mapping[int, frozenset[str]]

    def __post_init__(self):
        if set(self.adjacency) != set(self.entities):
            raise ValidationError("adjacency and entity maps disagree on the node set")
        for node, neighbors in self.adjacency.items():
            for other in neighbors:
                if other == node:
                    raise ValidationError(f"self-loop at node {node}")
                if node not in self.adjacency.get(other, frozenset()):
                    raise ValidationError(f"edge ({node}, {other}) is not symmetric")

    @classmethod
    def from_mapper(cls, graph: MapperGraph) -> "MemberGraph":
        return cls(adjacency=graph.adjacency, entities=graph.node_entities)

    @classmethod
    def from_edges(
        cls, node_entities: Mapping[int, Iterable[str]], edges: Iterable[tuple[int, int]]
    ) -> "MemberGraph":
        adjacency: dict[int, set[int]] = {node: set() for node in node_entities}
        for u, v in edges:
            adjacency[u].add(v)
            adjacency[v].add(u)
        return cls(
            adjacency={node: frozenset(adj) for node, adj in adjacency.items()},
            entities={node: frozenset(members) for node, members in node_entities.items()},
        )

    def entity_universe(self) -> frozenset[str]:
        universe: set[str] = set()
        for members in self.entities.values():
            universe.update(members)
        return frozenset(universe)

    def components(self) -> list[frozenset[int]]:
        seen: set[int] = set()
        out: list[frozenset[int]] = []
        for start in sorted(self.adjacency):
            if start in seen:
                continue
            component = _bfs_component(start, self.adjacency)
            seen.update(component)
            out.append(frozenset(component))
        return out


def _bfs_component(start: int, adjacency: Mapping[int, frozenset[int]]) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        current = queue.popleft()
        for nxt in adjacency[current]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def _as_member_graph(graph: MapperGraph | MemberGraph) -> MemberGraph:
    if isinstance(graph, MemberGraph):
        return graph
    return MemberGraph.from_mapper(graph)


class FlareType(Enum):
    TYPE0 = "Type0"  # no flare or island
    TYPE1 = "Type1"  # flares only
    TYPE2 = "Type2"  # flares and islands
    TYPE3 = "Type3"  # islands only


@dataclass(frozen=True)
class EntitySubgraph:
    """An entity's induced subgraph split into interior and boundary nodes."""

    entity: str
    nodes: frozenset[int]
    interior: frozenset[int]
    boundary: frozenset[int]
    adjacency: Mapping[int, frozenset[int]]

    def __post_init__(self):
        if self.interior | self.boundary != self.nodes or self.interior & self.boundary:
            raise ValidationError("interior and boundary must partition the subgraph")


@dataclass(frozen=True)
class FlareSignature:
    """Multiset of per-component flare indices, descending with inf first."""

    entity: str
    indices: tuple[float | int, ...]

    def __post_init__(self):
        if list(self.indices) != sorted(self.indices, reverse=True):
            raise ValidationError("signature indices must be sorted descending")

    def as_json(self) -> list:
        return ["inf" if math.isinf(k) else int(k) for k in self.indices]

    def as_text(self) -> str:
        return ";".join("inf" if math.isinf(k) else str(int(k)) for k in self.indices)


@dataclass(frozen=True)
class FlareReport:
    """An entity's flare length and Type 0-3 classification."""

    entity: str
    length: float | int
    type: FlareType

    def length_json(self):
        return "inf" if self.length == INFINITE else int(self.length)


def entity_subgraph(graph: MapperGraph | MemberGraph, entity: str) -> EntitySubgraph:
    """Induced subgraph of the nodes containing `entity`.

    The boundary is found first (a node with any neighbor outside the
    subgraph); the interior is the complement within the subgraph.
    """
    g = _as_member_graph(graph)
    if entity not in g.entity_universe():
        raise UnknownEntityError(f"entity {entity!r} appears in no node")
    nodes = frozenset(v for v, members in g.entities.items() if entity in members)
    boundary = frozenset(
        v for v in nodes if any(w not in nodes for w in g.adjacency[v])
    )
    interior = nodes - boundary
    restricted = {v: frozenset(w for w in g.adjacency[v] if w in nodes) for v in nodes}
    return EntitySubgraph(
        entity=entity, nodes=nodes, interior=interior, boundary=boundary, adjacency=restricted
    )


def exit_distances(subgraph: EntitySubgraph) -> dict[int, float | int]:
    """Exit distance of every interior node.

    Multi-source breadth-first search inside the induced subgraph, seeded at
    all boundary nodes (unit edge weights). Interior nodes unreachable from
    the boundary get inf.
    """
    distances: dict[int, float | int] = {v: INFINITE for v in subgraph.interior}
    queue: deque[tuple[int, int]] = deque((v, 0) for v in sorted(subgraph.boundary))
    seen: set[int] = set(subgraph.boundary)
    while queue:
        current, dist = queue.popleft()
        for nxt in subgraph.adjacency[current]:
            if nxt in seen:
                continue
            seen.add(nxt)
            if nxt in subgraph.interior:
                distances[nxt] = dist + 1
            queue.append((nxt, dist + 1))
    return distances


def flare_signature(
    subgraph: EntitySubgraph, graph: MapperGraph | MemberGraph
) -> FlareSignature:
    """Per-component flare indices of the entity's interior.

    Components of the interior are found by breadth-first search; each gets
    the maximum exit distance among its nodes. An index is infinite exactly
    when the component is a whole connected component of the ambient graph;
    that island check runs independently of the exit distances and any
    disagreement aborts.
    """
    g = _as_member_graph(graph)
    exits = exit_distances(subgraph)
    interior_adjacency = {
        v: frozenset(w for w in subgraph.adjacency[v] if w in subgraph.interior)
        for v in subgraph.interior
    }
    indices: list[float | int] = []
    remaining = set(subgraph.interior)
    while remaining:
        start = min(remaining)
        component = _bfs_component(start, interior_adjacency)
        remaining -= component
        index = max(exits[v] for v in component)
        is_island = all(g.adjacency[v] <= component for v in component)
        if is_island != (index == INFINITE):
            raise InternalInvariantError(
                f"island check and exit distances disagree on component {sorted(component)}"
                f" of entity {subgraph.entity!r}"
            )
        indices.append(index)
    return FlareSignature(
        entity=subgraph.entity, indices=tuple(sorted(indices, reverse=True))
    )


def flare_report(signature: FlareSignature) -> FlareReport:
    """Collapse a signature into a flare length and a Type 0-3 label."""
    finite = [k for k in signature.indices if not math.isinf(k)]
    infinite = [k for k in signature.indices if math.isinf(k)]
    if not signature.indices:
        return FlareReport(signature.entity, 0, FlareType.TYPE0)
    if not infinite:
        return FlareReport(signature.entity, int(max(finite)), FlareType.TYPE1)
    if finite:
        return FlareReport(signature.entity, int(max(finite)), FlareType.TYPE2)
    return FlareReport(signature.entity, INFINITE, FlareType.TYPE3)


@dataclass(frozen=True)
class HistogramRow:
    length: str
    frequency: int
    percentage: float
    cumulative_percentage: float


@dataclass(frozen=True)
class FlareCensus:
    """Flare reports for every entity in the graph, plus absentees."""

    reports: Mapping[str, FlareReport]
    signatures: Mapping[str, FlareSignature]
    absent: tuple[str, ...]

    def histogram(self) -> list[HistogramRow]:
        """Counts by flare length 0, 1, ..., max finite, inf, with percentages."""
        lengths = [report.length for report in self.reports.values()]
        total = len(lengths)
        finite = [int(k) for k in lengths if k != INFINITE]
        top = max(finite) if finite else 0
        buckets: list[tuple[str, int]] = []
        for k in range(top + 1):
            buckets.append((str(k), sum(1 for x in finite if x == k)))
        buckets.append(("inf", sum(1 for x in lengths if x == INFINITE)))
        rows: list[HistogramRow] = []
        running = 0
        for label, count in buckets:
            running += count
            rows.append(
                HistogramRow(
                    length=label,
                    frequency=count,
                    percentage=100.0 * count / total if total else 0.0,
                    cumulative_percentage=100.0 * running / total if total else 0.0,
                )
            )
        return rows

    def type_counts(self) -> dict[str, int]:
        counts = {t.value: 0 for t in FlareType}
        for report in self.reports.values():
            counts[report.type.value] += 1
        return counts


def flare_census(
    graph: MapperGraph | MemberGraph, entities: Iterable[str] | None = None
) -> FlareCensus:
    """Flare report for every entity appearing in the graph.

    Entities listed in `entities` but absent from every node are flagged and
    excluded from the histogram denominator.
    """
    g = _as_member_graph(graph)
    universe = g.entity_universe()
    declared = set(entities) if entities is not None else set(universe)
    absent = tuple(sorted(declared - universe))
    reports: dict[str, FlareReport] = {}
    signatures: dict[str, FlareSignature] = {}
    for entity in sorted(universe):
        subgraph = entity_subgraph(g, entity)
        signature = flare_signature(subgraph, g)
        signatures[entity] = signature
        reports[entity] = flare_report(signature)
    return FlareCensus(reports=reports, signatures=signatures, absent=absent)
