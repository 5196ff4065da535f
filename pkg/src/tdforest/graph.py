"""Labeled directed graphs, their undirected skeletons and summary statistics."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterator, Sequence

from . import bitset
from .bitset import VertexSet


class GraphFormatError(ValueError):
    """Raised when a graph document is malformed; the message names the location."""


@dataclass(frozen=True)
class Graph:
    """Directed multigraph with string labels on vertices and edges.

    Vertex ids are dense, ``0..n-1``.  ``source_ids`` keeps the ids used in the
    input document when they had to be re-densified.
    """

    labels: tuple[str, ...]
    edges: tuple[tuple[int, int, str], ...]
    root: int | None = None
    source_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        n = len(self.labels)
        for i, (u, v, _) in enumerate(self.edges):
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"edges[{i}]: dangling endpoint")
        if self.root is not None and not (0 <= self.root < n):
            raise GraphFormatError(f"root: unknown vertex {self.root}")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def vertices(self) -> list[tuple[int, str]]:
        return list(enumerate(self.labels))

    def external_id(self, v: int) -> int:
        return v if self.source_ids is None else self.source_ids[v]

    def edge_occurrences(self) -> list[int]:
        """Occurrence index of each edge among edges sharing its (src, dst)."""
        seen: dict[tuple[int, int], int] = {}
        occ = []
        for u, v, _ in self.edges:
            k = seen.get((u, v), 0)
            occ.append(k)
            seen[(u, v)] = k + 1
        return occ

    def first_label(self) -> dict[tuple[int, int], str]:
        """Label of the first listed edge for every ordered vertex pair."""
        out: dict[tuple[int, int], str] = {}
        for u, v, lab in self.edges:
            out.setdefault((u, v), lab)
        return out

    def in_degrees(self) -> list[int]:
        deg = [0] * self.n
        for _, v, _ in self.edges:
            deg[v] += 1
        return deg

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Graph with vertex ``v`` renamed to ``perm[v]``."""
        labels = [""] * self.n
        for v, lab in enumerate(self.labels):
            labels[perm[v]] = lab
        edges = tuple((perm[u], perm[v], lab) for u, v, lab in self.edges)
        root = None if self.root is None else perm[self.root]
        return Graph(tuple(labels), edges, root)

    def to_json(self) -> dict[str, Any]:
        return {
            "vertices": [{"id": self.external_id(v), "label": lab} for v, lab in enumerate(self.labels)],
            "edges": [
                {"src": self.external_id(u), "dst": self.external_id(v), "label": lab}
                for u, v, lab in self.edges
            ],
            "root": None if self.root is None else self.external_id(self.root),
        }


def _check_keys(obj: Any, where: str, required: set[str], optional: set[str] = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise GraphFormatError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise GraphFormatError(f"{where}: missing field(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise GraphFormatError(f"{where}: unknown field(s) {sorted(unknown)}")


def _int_field(obj: dict, key: str, where: str) -> int:
    val = obj[key]
    if not isinstance(val, int) or isinstance(val, bool):
        raise GraphFormatError(f"{where}.{key}: expected an integer")
    return val


def _str_field(obj: dict, key: str, where: str) -> str:
    val = obj[key]
    if not isinstance(val, str):
        raise GraphFormatError(f"{where}.{key}: expected a string")
    return val


def graph_from_obj(doc: Any) -> Graph:
    _check_keys(doc, "graph", {"vertices", "edges"}, {"root"})
    if not isinstance(doc["vertices"], list):
        raise GraphFormatError("vertices: expected a list")
    if not isinstance(doc["edges"], list):
        raise GraphFormatError("edges: expected a list")

    raw: list[tuple[int, str]] = []
    seen: set[int] = set()
    for i, vert in enumerate(doc["vertices"]):
        where = f"vertices[{i}]"
        _check_keys(vert, where, {"id", "label"})
        vid = _int_field(vert, "id", where)
        if vid in seen:
            raise GraphFormatError(f"{where}.id: duplicate id {vid}")
        seen.add(vid)
        raw.append((vid, _str_field(vert, "label", where)))

    raw.sort()
    dense = {vid: i for i, (vid, _) in enumerate(raw)}
    sparse = any(vid != i for i, (vid, _) in enumerate(raw))

    edges = []
    for i, edge in enumerate(doc["edges"]):
        where = f"edges[{i}]"
        _check_keys(edge, where, {"src", "dst", "label"})
        ends = []
        for key in ("src", "dst"):
            vid = _int_field(edge, key, where)
            if vid not in dense:
                raise GraphFormatError(f"{where}.{key}: dangling endpoint {vid}")
            ends.append(dense[vid])
        edges.append((ends[0], ends[1], _str_field(edge, "label", where)))

    root = doc.get("root")
    if root is not None:
        if not isinstance(root, int) or isinstance(root, bool):
            raise GraphFormatError("root: expected an integer or null")
        if root not in dense:
            raise GraphFormatError(f"root: unknown vertex {root}")
        root = dense[root]

    return Graph(
        labels=tuple(lab for _, lab in raw),
        edges=tuple(edges),
        root=root,
        source_ids=tuple(vid for vid, _ in raw) if sparse else None,
    )


def parse_graph(text: str) -> Graph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"line {exc.lineno} column {exc.colno}: malformed JSON ({exc.msg})") from None
    return graph_from_obj(doc)


@dataclass(frozen=True)
class Skeleton:
    """Undirected simple graph: ``adj[v]`` is the neighbour mask of ``v``."""

    n: int
    adj: tuple[VertexSet, ...]

    @property
    def vertices(self) -> VertexSet:
        return bitset.full(self.n)

    def pairs(self) -> Iterator[tuple[int, int]]:
        for u in range(self.n):
            for v in bitset.iter_ids(self.adj[u] >> (u + 1) << (u + 1)):
                yield u, v

    def neighborhood(self, mask: VertexSet) -> VertexSet:
        adj = self.adj
        out = 0
        while mask:
            low = mask & -mask
            out |= adj[low.bit_length() - 1]
            mask ^= low
        return out


def undirected_skeleton(g: Graph) -> Skeleton:
    adj = [0] * g.n
    for u, v, _ in g.edges:
        if u != v:
            adj[u] |= 1 << v
            adj[v] |= 1 << u
    return Skeleton(g.n, tuple(adj))


def components_after_removal(skel: Skeleton, s: VertexSet) -> list[VertexSet]:
    """Connected components of the skeleton with ``s`` deleted, ordered by lowest id."""
    return components_within(skel, skel.vertices & ~s)


def components_within(skel: Skeleton, region: VertexSet) -> list[VertexSet]:
    """Connected components of the subgraph induced by ``region``."""
    adj = skel.adj
    comps = []
    left = region
    while left:
        frontier = comp = left & -left
        left ^= comp
        while frontier:
            low = frontier & -frontier
            frontier ^= low
            grown = adj[low.bit_length() - 1] & left
            left ^= grown
            comp |= grown
            frontier |= grown
        comps.append(comp)
    return comps


@dataclass(frozen=True)
class GraphStats:
    n_vertices: int
    n_edges: int
    reentrancy_count: int
    diameter: int
    connected: bool
    treewidth: int | None

    def to_json(self) -> dict[str, Any]:
        return {
            "n_vertices": self.n_vertices,
            "n_edges": self.n_edges,
            "reentrancy_count": self.reentrancy_count,
            "diameter": self.diameter,
            "diameter_infinite": not self.connected,
            "treewidth": self.treewidth,
        }


def bfs_distances(skel: Skeleton, src: int) -> list[int]:
    dist = [-1] * skel.n
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in bitset.iter_ids(skel.adj[u]):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def diameter(skel: Skeleton) -> tuple[int, bool]:
    """Longest shortest path over connected pairs, and whether all pairs are connected."""
    best, connected = 0, True
    for v in range(skel.n):
        dist = bfs_distances(skel, v)
        best = max(best, max(dist))
        connected = connected and min(dist) >= 0
    return best, connected


def graph_stats(g: Graph, max_width: int) -> GraphStats:
    from .recognize import treewidth

    skel = undirected_skeleton(g)
    diam, connected = diameter(skel)
    tw = treewidth(g, max_width) if g.n <= bitset.MAX_VERTICES else None
    return GraphStats(
        n_vertices=g.n,
        n_edges=g.m,
        reentrancy_count=sum(1 for d in g.in_degrees() if d > 1),
        diameter=diam,
        connected=connected,
        treewidth=tw,
    )
