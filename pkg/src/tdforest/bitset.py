"""Vertex sets as integer bit masks.

Bit ``i`` of a mask stands for vertex ``i``.  Forest parsing caps graphs at
64 vertices, so every mask fits a 64-bit word; Python ints are used directly.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, Iterator

MAX_VERTICES = 64

VertexSet = int


def from_ids(ids: Iterable[int]) -> VertexSet:
    mask = 0
    for v in ids:
        mask |= 1 << v
    return mask


def ids(mask: VertexSet) -> list[int]:
    return list(iter_ids(mask))


def iter_ids(mask: VertexSet) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def size(mask: VertexSet) -> int:
    return mask.bit_count()


def lowest(mask: VertexSet) -> int:
    """Lowest vertex id in a non-empty mask."""
    return (mask & -mask).bit_length() - 1


def full(n: int) -> VertexSet:
    return (1 << n) - 1


def is_subset(a: VertexSet, b: VertexSet) -> bool:
    return a & ~b == 0


def subsets_adding(base: VertexSet, pool: VertexSet, max_added: int) -> Iterator[VertexSet]:
    """Yield ``base | extra`` for every non-empty ``extra`` of ``pool`` with
    at most ``max_added`` members, smallest additions first."""
    members = ids(pool)
    for k in range(1, min(max_added, len(members)) + 1):
        for combo in combinations(members, k):
            yield base | from_ids(combo)


def fmt(mask: VertexSet, names: list[str] | None = None) -> str:
    items = ids(mask)
    if names is not None:
        return "{" + ",".join(names[v] for v in items) + "}"
    return "{" + ",".join(map(str, items)) + "}"
