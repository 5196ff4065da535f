"""Recognition of bounded-width tree decompositions and a standalone validity check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from . import bitset
from .bitset import VertexSet
from .graph import Graph, Skeleton, components_within, undirected_skeleton


class GraphTooLarge(ValueError):
    pass


class TDStructureError(ValueError):
    """Bag arcs do not form a rooted tree."""


@dataclass(frozen=True)
class StateKey:
    """Subproblem: cover component ``c`` whose interface to the rest is ``s``."""

    s: VertexSet
    c: VertexSet


def neighbors_in(skel: Skeleton, s: VertexSet, c: VertexSet) -> VertexSet:
    """Members of ``s`` adjacent to some member of ``c``."""
    return skel.neighborhood(c) & s


def check_size(g: Graph) -> None:
    if g.n > bitset.MAX_VERTICES:
        raise GraphTooLarge(f"graph has {g.n} vertices; forest parsing supports at most {bitset.MAX_VERTICES}")


class Recognizer:
    """Memoized recognition of width-``width`` decompositions by component splitting.

    The memo table belongs to a single width; a new instance is needed for
    every width searched.
    """

    def __init__(self, skel: Skeleton, width: int):
        if width < 0:
            raise ValueError("width must be non-negative")
        self.skel = skel
        self.width = width
        self.memo: dict[tuple[VertexSet, VertexSet], bool] = {}

    def decomp(self, s: VertexSet, c: VertexSet) -> bool:
        key = (s, c)
        hit = self.memo.get(key)
        if hit is None:
            hit = self.memo[key] = self._decomp(s, c)
        return hit

    def _decomp(self, s: VertexSet, c: VertexSet) -> bool:
        cap = self.width + 1
        nbr = neighbors_in(self.skel, s, c)
        if bitset.size(nbr | c) <= cap:
            return True
        room = cap - bitset.size(nbr)
        for bag in bitset.subsets_adding(nbr, c, room):
            rest = c & ~bag
            if all(self.decomp(bag, comp) for comp in components_within(self.skel, rest)):
                return True
        return False


def decomp(skel: Skeleton, s: VertexSet, c: VertexSet, width: int, memo: dict | None = None) -> bool:
    rec = Recognizer(skel, width)
    if memo is not None:
        rec.memo = memo
    return rec.decomp(s, c)


def treewidth(g: Graph, max_width: int) -> int | None:
    """Exact treewidth if it is at most ``max_width``, else ``None``."""
    check_size(g)
    skel = undirected_skeleton(g)
    comps = components_within(skel, skel.vertices)
    best = 0
    for comp in comps:
        for w in range(best, max_width + 1):
            if Recognizer(skel, w).decomp(0, comp):
                best = w
                break
        else:
            return None
    return best


@dataclass
class TreeDecomposition:
    bags: list[VertexSet]
    arcs: list[tuple[int, int]]
    root: int = 0

    @property
    def width(self) -> int:
        return max(bitset.size(b) for b in self.bags) - 1

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in self.bags]
        for p, c in self.arcs:
            kids[p].append(c)
        return kids

    def to_json(self, g: Graph | None = None) -> dict[str, Any]:
        ext = (lambda v: v) if g is None else g.external_id
        return {
            "bags": [[ext(v) for v in bitset.iter_ids(b)] for b in self.bags],
            "arcs": [list(a) for a in self.arcs],
            "root": self.root,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "TreeDecomposition":
        return cls(
            bags=[bitset.from_ids(b) for b in doc["bags"]],
            arcs=[(int(p), int(c)) for p, c in doc["arcs"]],
            root=int(doc["root"]),
        )


@dataclass
class ValidationReport:
    width: int
    uncovered_vertices: list[int] = field(default_factory=list)
    uncovered_edges: list[tuple[int, int]] = field(default_factory=list)
    running_intersection: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.uncovered_vertices or self.uncovered_edges or self.running_intersection)

    def to_json(self, g: Graph | None = None) -> dict[str, Any]:
        ext = (lambda v: v) if g is None else g.external_id
        return {
            "ok": self.ok,
            "width": self.width,
            "uncovered_vertices": [ext(v) for v in self.uncovered_vertices],
            "uncovered_edges": [[ext(u), ext(v)] for u, v in self.uncovered_edges],
            "running_intersection": self.running_intersection,
        }


def tree_parents(td: TreeDecomposition) -> list[int]:
    """Parent index of each bag (-1 for the root); raises if arcs are not a rooted tree."""
    nb = len(td.bags)
    if nb == 0:
        raise TDStructureError("decomposition has no bags")
    if not 0 <= td.root < nb:
        raise TDStructureError(f"root index {td.root} out of range")
    if len(td.arcs) != nb - 1:
        raise TDStructureError(f"{len(td.arcs)} arcs for {nb} bags")
    parent = [-1] * nb
    for p, c in td.arcs:
        if not (0 <= p < nb and 0 <= c < nb):
            raise TDStructureError(f"arc ({p}, {c}) out of range")
        if c == td.root or parent[c] != -1:
            raise TDStructureError(f"bag {c} has more than one parent")
        parent[c] = p
    kids = td.children()
    seen = {td.root}
    stack = [td.root]
    while stack:
        for c in kids[stack.pop()]:
            seen.add(c)
            stack.append(c)
    if len(seen) != nb:
        raise TDStructureError("arcs do not connect all bags to the root")
    return parent


def validate_td(g: Graph, td: TreeDecomposition) -> ValidationReport:
    parent = tree_parents(td)
    report = ValidationReport(width=td.width)
    union = 0
    for b in td.bags:
        union |= b
    report.uncovered_vertices = [v for v in range(g.n) if not union >> v & 1]
    for u, v in undirected_skeleton(g).pairs():
        pair = (1 << u) | (1 << v)
        if not any(b & pair == pair for b in td.bags):
            report.uncovered_edges.append((u, v))
    for v in range(g.n):
        holders = [i for i, b in enumerate(td.bags) if b >> v & 1]
        # connected iff exactly one holder has its parent outside the holder set
        tops = sum(1 for i in holders if parent[i] < 0 or not td.bags[parent[i]] >> v & 1)
        if tops > 1:
            report.running_intersection.append(v)
    return report
