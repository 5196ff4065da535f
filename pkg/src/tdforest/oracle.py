"""Exhaustive reference computations used to cross-check the forest machinery.

Everything here is deliberately exponential and shares no search code with
the recognizer or the forest builder.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterator, Sequence

import numpy as np

from . import bitset
from .bitset import VertexSet
from .forest import BinForest, Forest, bag_size_freq, count_trees, freq_key, topo_order
from .graph import Graph, Skeleton, components_within, undirected_skeleton
from .recognize import TreeDecomposition, tree_parents, validate_td

MAX_ORACLE_VERTICES = 7
MAX_ORACLE_TREES = 10_000


class OracleBudgetExceeded(RuntimeError):
    pass


# -- canonical codes -----------------------------------------------------------


def canonical_td(td: TreeDecomposition) -> str:
    """Code equal for two decompositions iff they are the same rooted bag tree."""
    kids = td.children()

    def code(i: int) -> str:
        inner = "".join(sorted(code(c) for c in kids[i]))
        return "(" + ",".join(map(str, bitset.ids(td.bags[i]))) + inner + ")"

    bag_multiset = "|".join(sorted(",".join(map(str, bitset.ids(b))) for b in td.bags))
    return bag_multiset + "#" + code(td.root)


@dataclass(frozen=True)
class _Sub:
    bag: VertexSet
    children: tuple["_Sub", ...]

    def to_td(self) -> TreeDecomposition:
        bags: list[VertexSet] = []
        arcs: list[tuple[int, int]] = []

        def walk(t: _Sub, parent: int) -> None:
            bags.append(t.bag)
            me = len(bags) - 1
            if parent >= 0:
                arcs.append((parent, me))
            for c in t.children:
                walk(c, me)

        walk(self, -1)
        return TreeDecomposition(bags, arcs, 0)


# -- treewidth by subset dynamic programming ------------------------------------


def brute_force_treewidth(g: Graph) -> int:
    """Exact treewidth via the elimination-ordering recurrence over vertex subsets.

    ``tw(S) = min_v max(tw(S - v), |Q(S - v, v)|)`` where ``Q(S, v)`` are the
    vertices outside ``S + v`` reachable from ``v`` through ``S``.
    """
    skel = undirected_skeleton(g)
    n = g.n
    if n == 0:
        return 0
    everything = bitset.full(n)

    def q(s: VertexSet, v: int) -> int:
        seen = reach = 1 << v
        frontier = reach
        while frontier:
            nbrs = skel.neighborhood(frontier) & ~seen
            seen |= nbrs
            frontier = nbrs & s
        return bitset.size(seen & ~s & ~(1 << v))

    tw = {0: -1}
    for size in range(1, n + 1):
        for combo in combinations(range(n), size):
            s = bitset.from_ids(combo)
            tw[s] = min(max(tw[s & ~(1 << v)], q(s & ~(1 << v), v)) for v in combo)
    return max(tw[everything], 0)


# -- decomposition enumeration --------------------------------------------------


def _set_partitions(items: Sequence[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[head]] + part
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1 :]


class _Enumerator:
    """Generate every rooted decomposition in which each bag introduces a new vertex.

    A node covers a ``group`` of vertices first seen in its subtree.  Its bag
    is a non-empty slice of the group plus vertices inherited from the
    parent bag; the rest of the group is split among child subtrees.  The only
    pruning applied follows from the tree decomposition properties alone.
    """

    def __init__(self, g: Graph, width: int, normal: bool = False):
        self.skel = undirected_skeleton(g)
        self.cap = width + 1
        self.normal = normal

    def subtrees(self, group: VertexSet, parent: VertexSet, top: bool = False) -> list[_Sub]:
        skel = self.skel
        # parent vertices adjacent to the group must be inherited
        forced = skel.neighborhood(group) & parent
        optional = bitset.ids(parent & ~forced)
        if self.normal:
            # per-node normal-form conditions, checked as soon as the node exists
            if not top and components_within(skel, group) != [group]:
                return []
            if skel.neighborhood(group) & ~group & ~parent:
                return []
            if parent and forced == parent:
                return []
            optional = []
        out = []
        members = bitset.ids(group)
        for k in range(1, len(members) + 1):
            for fresh in combinations(members, k):
                fresh_mask = bitset.from_ids(fresh)
                room = self.cap - k - bitset.size(forced)
                if room < 0:
                    continue
                for j in range(min(room, len(optional)) + 1):
                    for extra in combinations(optional, j):
                        bag = fresh_mask | forced | bitset.from_ids(extra)
                        out.extend(self._with_children(bag, group & ~fresh_mask))
        return out

    def _with_children(self, bag: VertexSet, rest: VertexSet) -> Iterator[_Sub]:
        if not rest:
            yield _Sub(bag, ())
            return
        # vertices in different child subtrees never share a bag, hence no
        # edges between groups: groups are unions of components of ``rest``
        comps = components_within(self.skel, rest)
        for part in _set_partitions(list(range(len(comps)))):
            groups = []
            for block in part:
                mask = 0
                for i in block:
                    mask |= comps[i]
                groups.append(mask)
            options = [self.subtrees(grp, bag) for grp in groups]
            for kids in product(*options):
                yield _Sub(bag, tuple(kids))


def _normal_form_violation(skel: Skeleton, td: TreeDecomposition, width: int) -> str | None:
    """Why ``td`` is not in the normal form produced by top-down component splitting.

    Every node must cover a full component ``D`` of the graph minus its parent
    bag, meet the parent bag exactly in the neighbours of ``D``, add at least
    one vertex of ``D``, and not be contained in any child bag.
    """
    parent = tree_parents(td)
    kids = td.children()
    n = skel.n
    below = list(td.bags)
    for i in reversed(_preorder(kids, td.root)):
        for c in kids[i]:
            below[i] |= below[c]
    everything = bitset.full(n)
    comps = components_within(skel, everything)

    root_bag = td.bags[td.root]
    if root_bag == 0 and n > 0:
        if len(comps) < 2:
            return "empty root bag on a connected graph"
        if sorted(below[c] for c in kids[td.root]) != sorted(comps):
            return "synthetic root children do not match the graph components"

    for i in range(len(td.bags)):
        p = parent[i]
        if p < 0 and root_bag == 0:
            continue
        pbag = 0 if p < 0 else td.bags[p]
        comp = everything if p < 0 else below[i] & ~pbag
        if p >= 0 and components_within(skel, comp) != [comp]:
            return f"bag {i} covers a disconnected region"
        if skel.neighborhood(comp) & ~comp & ~pbag:
            return f"bag {i} covers part of a component"
        nbr = skel.neighborhood(comp) & pbag
        if td.bags[i] & pbag != nbr:
            return f"bag {i} inherits non-neighbours of its region"
        if td.bags[i] == nbr:
            return f"bag {i} adds no vertex"
        for c in kids[i]:
            if td.bags[i] & ~td.bags[c] == 0:
                return f"bag {i} is contained in its child {c}"
    return None


def _preorder(kids: list[list[int]], root: int) -> list[int]:
    order, stack = [], [root]
    while stack:
        i = stack.pop()
        order.append(i)
        stack.extend(kids[i])
    return order


def root_constraint_holds(g: Graph, td: TreeDecomposition) -> bool:
    if g.root is None:
        return True
    skel = undirected_skeleton(g)
    top = td.bags[td.root]
    if top == 0:
        # synthetic root: the child subtree holding the graph root is the one constrained
        kids = td.children()
        for c in kids[td.root]:
            sub = [td.bags[j] for j in _preorder(kids, c)]
            if any(b >> g.root & 1 for b in sub):
                top = td.bags[c]
    if not top >> g.root & 1:
        return False
    return skel.adj[g.root] == 0 or bool(skel.adj[g.root] & top)


def all_tds(
    g: Graph,
    width: int,
    max_bags: int | None = None,
    normal: bool = False,
) -> list[TreeDecomposition]:
    """Every valid rooted decomposition of width at most ``width`` whose bags
    each introduce a vertex (so at most ``n`` bags), deduplicated.

    With ``normal`` the per-node normal-form conditions prune the search as
    it goes; the disconnected case then joins components under an empty bag.
    """
    if g.n > MAX_ORACLE_VERTICES:
        raise OracleBudgetExceeded(f"oracle supports at most {MAX_ORACLE_VERTICES} vertices")
    enum = _Enumerator(g, width, normal)
    everything = bitset.full(g.n)
    comps = components_within(enum.skel, everything)
    if g.n == 0:
        subs = [_Sub(0, ())]
    elif normal and len(comps) > 1:
        per_comp = [enum.subtrees(c, 0) for c in comps]
        subs = [_Sub(0, tuple(choice)) for choice in product(*per_comp)]
    else:
        subs = enum.subtrees(everything, 0, top=True)
    out: dict[str, TreeDecomposition] = {}
    for sub in subs:
        td = sub.to_td()
        if max_bags is not None and len(td.bags) > max_bags:
            continue
        if validate_td(g, td).ok and td.width <= width:
            out.setdefault(canonical_td(td), td)
    return [out[k] for k in sorted(out)]


def brute_force_tds(
    g: Graph,
    width: int,
    max_bags: int | None = None,
    root_constrained: bool = False,
    early_prune: bool = True,
    min_bags: bool = False,
    freq_order: str = "large-first",
) -> set[str]:
    """Canonical codes of all normal-form decompositions of width at most ``width``.

    Candidates come from the exhaustive enumerator and must pass the three
    decomposition properties and the whole-tree normal-form predicate.  With
    ``early_prune=False`` the enumerator runs unpruned (connected graphs only;
    very slow beyond five vertices).  ``min_bags`` keeps only the survivors
    whose bag size frequency vector is smallest under ``freq_order``.
    """
    skel = undirected_skeleton(g)
    kept = []
    for td in all_tds(g, width, max_bags, normal=early_prune):
        if _normal_form_violation(skel, td, width) is not None:
            continue
        if root_constrained and not root_constraint_holds(g, td):
            continue
        kept.append(td)
    if min_bags and kept:
        length = width + 2
        keys = [freq_key(bag_size_freq(td.bags, length), freq_order) for td in kept]
        best = min(keys)
        kept = [td for td, k in zip(kept, keys) if k == best]
    return {canonical_td(td) for td in kept}


def normal_form_violation(g: Graph, td: TreeDecomposition, width: int) -> str | None:
    return _normal_form_violation(undirected_skeleton(g), td, width)


# -- marginals by enumeration -------------------------------------------------


def brute_force_marginals(
    f: Forest | BinForest,
    weights: Sequence[Sequence[float]],
) -> np.ndarray:
    """Probability that each node occurs in a tree drawn by independent
    derivation choices with the given per-node weights.

    A binarized forest is read through its source; the result has one entry
    per source node.
    """
    src = f.source if isinstance(f, BinForest) else f
    if count_trees(src) > MAX_ORACLE_TREES:
        raise OracleBudgetExceeded(f"more than {MAX_ORACLE_TREES} trees")
    topo_order(src)
    memo: dict[int, list[tuple[float, frozenset[int]]]] = {}

    def trees(i: int) -> list[tuple[float, frozenset[int]]]:
        if i in memo:
            return memo[i]
        node = src.nodes[i]
        if not node.derivations:
            memo[i] = [(1.0, frozenset([i]))]
            return memo[i]
        out = []
        for r, der in enumerate(node.derivations):
            for combo in product(*(trees(c) for c in der)):
                p = float(weights[i][r])
                members = {i}
                for q, s in combo:
                    p *= q
                    members |= s
                out.append((p, frozenset(members)))
        memo[i] = out
        return out

    marg = np.zeros(len(src.nodes))
    for p, members in trees(src.root):
        for i in members:
            marg[i] += p
    return marg
