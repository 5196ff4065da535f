"""Canonical codes for the unlabeled directed subgraph induced by a bag."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

from . import bitset
from .bitset import VertexSet
from .graph import Graph

MAX_MOTIF_BAG = 5


class BagTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class MotifId:
    canonical_code: bytes
    index: int


def _adjacency(g: Graph, verts: list[int]) -> tuple[tuple[bool, ...], ...]:
    pos = {v: i for i, v in enumerate(verts)}
    rows = [[False] * len(verts) for _ in verts]
    for u, v, _ in g.edges:
        if u != v and u in pos and v in pos:
            rows[pos[u]][pos[v]] = True
    return tuple(tuple(r) for r in rows)


def _code_bits(adj, order) -> tuple[int, ...]:
    k = len(order)
    return tuple(int(adj[order[i]][order[j]]) for i in range(k) for j in range(k) if i != j)


@lru_cache(maxsize=None)
def _canonical(adj: tuple[tuple[bool, ...], ...]) -> tuple[bytes, tuple[tuple[int, ...], ...]]:
    """Minimal off-diagonal bit string over all orderings, with every ordering attaining it."""
    k = len(adj)
    best: tuple[int, ...] | None = None
    winners: list[tuple[int, ...]] = []
    for order in permutations(range(k)):
        bits = _code_bits(adj, order)
        if best is None or bits < best:
            best, winners = bits, [order]
        elif bits == best:
            winners.append(order)
    packed = bytes([k]) + bytes(best or ())
    return packed, tuple(winners)


def canonical_code(g: Graph, bag: VertexSet) -> bytes:
    if bag == 0:
        return b""
    verts = bitset.ids(bag)
    if len(verts) > MAX_MOTIF_BAG:
        raise BagTooLarge(f"bag of {len(verts)} vertices exceeds motif limit {MAX_MOTIF_BAG}")
    return _canonical(_adjacency(g, verts))[0]


def canonical_slots(g: Graph, bag: VertexSet) -> list[int]:
    """Bag vertices in a relabel-invariant order.

    Among orderings giving the canonical motif code, pick the one whose
    matrix of edge labels is lexicographically smallest; any remaining tie
    is a label-preserving automorphism.
    """
    verts = bitset.ids(bag)
    if len(verts) > MAX_MOTIF_BAG:
        raise BagTooLarge(f"bag of {len(verts)} vertices exceeds motif limit {MAX_MOTIF_BAG}")
    if not verts:
        return []
    _, winners = _canonical(_adjacency(g, verts))
    if len(winners) == 1:
        return [verts[i] for i in winners[0]]
    labels = g.first_label()
    k = len(verts)

    def label_key(order):
        return tuple(
            labels.get((verts[order[i]], verts[order[j]]), "")
            for i in range(k)
            for j in range(k)
            if i != j
        )

    return [verts[i] for i in min(winners, key=label_key)]


class MotifTable:
    """Interns canonical codes as small integers; index 0 is the empty bag."""

    def __init__(self):
        self._lock = threading.Lock()
        self._index: dict[bytes, int] = {b"": 0}

    def intern(self, code: bytes) -> int:
        with self._lock:
            if code not in self._index:
                self._index[code] = len(self._index)
            return self._index[code]

    def to_json(self) -> dict[str, int]:
        with self._lock:
            return {code.hex(): i for code, i in sorted(self._index.items(), key=lambda kv: kv[1])}

    def __len__(self) -> int:
        return len(self._index)


_DEFAULT_TABLE = MotifTable()


def canonical_form(g: Graph, bag: VertexSet, table: MotifTable | None = None) -> MotifId:
    code = canonical_code(g, bag)
    table = _DEFAULT_TABLE if table is None else table
    return MotifId(code, table.intern(code))
