"""Packed AND-OR forests of all bounded-width tree decompositions of a graph.

Two node kinds alternate.  A bag node holds a bag ``X`` covering a component
``C`` (its interface to the parent is ``X - C``); its single derivation lists
one child per connected component left after removing the bag, and a leaf's
bag holds its whole component.  A choice node stands for an (interface,
component) subproblem and has one single-child derivation per admissible bag
node.  Choice nodes with only one option are elided.  Bags that a child would
contain entirely are never generated, so the trees are exactly the reduced
decompositions in top-down normal form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

from . import bitset
from .bitset import VertexSet
from .graph import Graph, Skeleton, components_within, undirected_skeleton
from .recognize import StateKey, TreeDecomposition, check_size


class ForestSkip(Exception):
    """The graph cannot be parsed at the requested width; callers bypass the encoder."""


class WidthExceeded(ForestSkip):
    pass


class ForestStructureError(ValueError):
    pass


@dataclass
class ForestNode:
    """A bag node, or with ``choice`` set, a subproblem whose ``bag`` is its interface."""

    bag: VertexSet
    component: VertexSet
    derivations: list[tuple[int, ...]] = field(default_factory=list)
    choice: bool = False

    @property
    def state(self) -> StateKey:
        return StateKey(self.bag & ~self.component, self.component)

    @property
    def is_leaf(self) -> bool:
        return not self.derivations

    def relinked(self, derivations: list[tuple[int, ...]]) -> "ForestNode":
        return ForestNode(self.bag, self.component, derivations, self.choice)


@dataclass
class Forest:
    nodes: list[ForestNode]
    root: int
    width: int

    @property
    def synthetic_root(self) -> bool:
        node = self.nodes[self.root]
        return node.bag == 0 and bool(node.derivations)

    def parents(self) -> list[list[int]]:
        par: list[list[int]] = [[] for _ in self.nodes]
        for i, node in enumerate(self.nodes):
            for der in node.derivations:
                for c in der:
                    if i not in par[c]:
                        par[c].append(i)
        return par

    def bags(self) -> set[VertexSet]:
        """Non-empty bags of bag nodes, i.e. every bag some tree can use."""
        return {n.bag for n in self.nodes if n.bag and not n.choice}

    def summary(self) -> dict[str, int]:
        return {
            "nodes": len(self.nodes),
            "derivations": sum(len(n.derivations) for n in self.nodes),
            "trees": count_trees(self),
        }

    def to_json(self, g: Graph | None = None) -> dict[str, Any]:
        ext = (lambda v: v) if g is None else g.external_id
        return {
            "root": self.root,
            "width": self.width,
            "nodes": [
                {
                    "id": i,
                    "bag": [ext(v) for v in bitset.iter_ids(n.bag)],
                    "component": [ext(v) for v in bitset.iter_ids(n.component)],
                    "choice": n.choice,
                    "aux": False,
                    "derivations": [list(d) for d in n.derivations],
                }
                for i, n in enumerate(self.nodes)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any], g: Graph | None = None) -> "Forest":
        local = _id_lookup(g)
        nodes = []
        for i, raw in enumerate(doc["nodes"]):
            if raw.get("id", i) != i:
                raise ForestStructureError(f"nodes[{i}]: ids must be dense and ordered")
            if raw.get("aux"):
                raise ForestStructureError(f"nodes[{i}]: auxiliary node in an unbinarized forest")
            if raw.get("bag") is None:
                raise ForestStructureError(f"nodes[{i}]: missing bag")
            nodes.append(
                ForestNode(
                    bag=bitset.from_ids(local(v) for v in raw["bag"]),
                    component=bitset.from_ids(local(v) for v in raw.get("component", [])),
                    derivations=[tuple(int(c) for c in d) for d in raw["derivations"]],
                    choice=bool(raw.get("choice", False)),
                )
            )
        f = cls(nodes, int(doc["root"]), int(doc.get("width", 0)))
        topo_order(f)
        return f


def _id_lookup(g: Graph | None):
    if g is None or g.source_ids is None:
        return int
    dense = {vid: i for i, vid in enumerate(g.source_ids)}
    return lambda v: dense[int(v)]


def topo_order(f) -> list[int]:
    """Nodes reachable from the root, children before parents."""
    order: list[int] = []
    state = [0] * len(f.nodes)  # 0 new, 1 on stack, 2 done
    stack: list[tuple[int, Iterator[int]]] = []

    def kids(i: int) -> Iterator[int]:
        for der in f.nodes[i].derivations:
            for c in der:
                if not 0 <= c < len(f.nodes):
                    raise ForestStructureError(f"node {i} refers to missing node {c}")
                yield c

    state[f.root] = 1
    stack.append((f.root, kids(f.root)))
    while stack:
        i, it = stack[-1]
        for c in it:
            if state[c] == 1:
                raise ForestStructureError(f"cycle through node {c}")
            if state[c] == 0:
                state[c] = 1
                stack.append((c, kids(c)))
                break
        else:
            stack.pop()
            state[i] = 2
            order.append(i)
    return order


class _Builder:
    def __init__(self, g: Graph, width: int):
        self.g = g
        self.width = width
        self.cap = width + 1
        self.skel: Skeleton = undirected_skeleton(g)
        self.nodes: list[ForestNode] = []
        self.memo: dict[tuple[VertexSet, VertexSet], list[int]] = {}
        self.choices: dict[tuple[VertexSet, VertexSet], int | None] = {}
        self.hood: dict[VertexSet, VertexSet] = {}

    def alternatives(self, nbr: VertexSet, comp: VertexSet) -> list[int]:
        """Bag node ids able to cover ``comp`` below interface ``nbr``."""
        key = (nbr, comp)
        if key not in self.memo:
            self.memo[key] = self._alternatives(nbr, comp)
        return self.memo[key]

    def choice(self, nbr: VertexSet, comp: VertexSet) -> int | None:
        """Node standing for the subproblem; None when it has no solution."""
        key = (nbr, comp)
        if key not in self.choices:
            self.choices[key] = self.choice_over(nbr, comp, self.alternatives(nbr, comp))
        return self.choices[key]

    def choice_over(self, nbr: VertexSet, comp: VertexSet, alts: list[int]) -> int | None:
        if not alts:
            return None
        if len(alts) == 1:
            return alts[0]
        return self._add(ForestNode(nbr, comp, [(a,) for a in alts], choice=True))

    def _alternatives(self, nbr: VertexSet, comp: VertexSet) -> list[int]:
        out = []
        for bag in bitset.subsets_adding(nbr, comp, self.cap - bitset.size(nbr)):
            subs = components_within(self.skel, comp & ~bag)
            anchors = [self.neighborhood(sub) & bag for sub in subs]
            # a child attached to the whole bag would contain it; skip redundant bags
            if any(a == bag for a in anchors):
                continue
            kids = []
            for sub, anchor in zip(subs, anchors):
                kid = self.choice(anchor, sub)
                if kid is None:
                    break
                kids.append(kid)
            else:
                out.append(self._add(ForestNode(bag, comp, [tuple(kids)] if kids else [])))
        return out

    def neighborhood(self, mask: VertexSet) -> VertexSet:
        if mask not in self.hood:
            self.hood[mask] = self.skel.neighborhood(mask)
        return self.hood[mask]

    def _add(self, node: ForestNode) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1


def _satisfies_root(skel: Skeleton, bag: VertexSet, root: int) -> bool:
    if not bag >> root & 1:
        return False
    # a root without neighbours cannot have an edge covered alongside it
    return skel.adj[root] == 0 or bool(skel.adj[root] & bag)


def build_forest(g: Graph, width: int, root_constrained: bool = False) -> Forest:
    """Forest of every reduced width-``width`` decomposition found by component splitting.

    Disconnected graphs get an empty root bag joining one subtree per
    component.  With ``root_constrained`` and a graph root, the root bag of
    the root's component must hold the graph root and one of its edges.
    """
    check_size(g)
    if width < 0:
        raise ValueError("width must be non-negative")
    if g.n == 0:
        return Forest([ForestNode(0, 0)], 0, width)
    b = _Builder(g, width)
    everything = bitset.full(g.n)
    constrain = root_constrained and g.root is not None

    tops = []
    for comp in components_within(b.skel, everything):
        alts = b.alternatives(0, comp)
        if constrain and comp >> g.root & 1:
            alts = [i for i in alts if _satisfies_root(b.skel, b.nodes[i].bag, g.root)]
            top = b.choice_over(0, comp, alts)
        else:
            top = b.choice(0, comp)
        if top is None:
            raise WidthExceeded(f"width exceeded: treewidth is above {width}")
        tops.append(top)
    root = tops[0] if len(tops) == 1 else b._add(ForestNode(0, everything, [tuple(tops)]))
    return _compact(Forest(b.nodes, root, width))


def _compact(f: Forest) -> Forest:
    """Drop unreachable nodes, keeping the remaining ones in creation order."""
    keep = sorted(topo_order(f))
    if len(keep) == len(f.nodes):
        return f
    new_id = {old: new for new, old in enumerate(keep)}
    nodes = [
        f.nodes[old].relinked([tuple(new_id[c] for c in d) for d in f.nodes[old].derivations])
        for old in keep
    ]
    return Forest(nodes, new_id[f.root], f.width)


def sort_children(f: Forest, key) -> Forest:
    """Copy of ``f`` with each derivation's children ordered by ``key(node)``."""
    nodes = [
        n.relinked([tuple(sorted(d, key=lambda c: key(f.nodes[c]))) for d in n.derivations])
        for n in f.nodes
    ]
    return Forest(nodes, f.root, f.width)


# -- bag size frequency pruning ------------------------------------------------

FREQ_ORDERS = ("large-first", "small-first")


def freq_key(vec: Sequence[int], order: str = "large-first") -> tuple[int, ...]:
    """Sort key realising the chosen lexicographic order on frequency vectors.

    ``large-first`` compares counts of the largest bags first, so fewer big
    bags wins; ``small-first`` is plain lexicographic order by increasing size.
    """
    if order == "large-first":
        return tuple(reversed(vec))
    if order == "small-first":
        return tuple(vec)
    raise ValueError(f"unknown frequency order {order!r}")


def bag_size_freq(bags: Sequence[VertexSet], length: int) -> tuple[int, ...]:
    counts = [0] * length
    for b in bags:
        counts[bitset.size(b)] += 1
    return tuple(counts)


def prune_min_bags(f: Forest, width: int, order: str = "large-first") -> Forest:
    """Keep, at every node, only the derivations with minimal bag size frequency."""
    length = max(width + 2, max(bitset.size(n.bag) for n in f.nodes) + 1)
    best: dict[int, tuple[int, ...]] = {}
    kept: dict[int, list[tuple[int, ...]]] = {}
    for i in topo_order(f):
        node = f.nodes[i]
        own = [0] * length
        if not node.choice:
            own[bitset.size(node.bag)] += 1
        if node.is_leaf:
            best[i] = tuple(own)
            kept[i] = []
            continue
        sums = []
        for der in node.derivations:
            vec = list(own)
            for c in der:
                for j, x in enumerate(best[c]):
                    vec[j] += x
            sums.append(tuple(vec))
        winner = min(sums, key=lambda v: freq_key(v, order))
        best[i] = winner
        kept[i] = [d for d, v in zip(node.derivations, sums) if v == winner]
    nodes = [n.relinked(kept.get(i, n.derivations)) for i, n in enumerate(f.nodes)]
    return _compact(Forest(nodes, f.root, f.width))


# -- binarization --------------------------------------------------------------

ORIG, CHOICE, AUX, NULL = "orig", "choice", "aux", "null"


@dataclass
class BinNode:
    kind: str
    bag: VertexSet | None
    derivations: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class BinForest:
    """Binary forest; node ``i < len(source.nodes)`` is original node ``i``."""

    nodes: list[BinNode]
    root: int
    source: Forest
    null: int | None = None

    def parents(self) -> list[list[tuple[int, int, int]]]:
        """Per node, the (parent, derivation index, position) occurrences."""
        par: list[list[tuple[int, int, int]]] = [[] for _ in self.nodes]
        for i, node in enumerate(self.nodes):
            for r, der in enumerate(node.derivations):
                for pos, c in enumerate(der):
                    par[c].append((i, r, pos))
        return par

    def to_json(self, g: Graph | None = None) -> dict[str, Any]:
        ext = (lambda v: v) if g is None else g.external_id
        return {
            "root": self.root,
            "nodes": [
                {
                    "id": i,
                    "bag": None if n.bag is None else [ext(v) for v in bitset.iter_ids(n.bag)],
                    "choice": n.kind == CHOICE,
                    "aux": n.kind in (AUX, NULL),
                    "derivations": [list(d) for d in n.derivations],
                }
                for i, n in enumerate(self.nodes)
            ],
        }


def binarize(f: Forest) -> BinForest:
    """Right-fold every derivation into pairs; single children pair with a shared NULL leaf.

    Auxiliary nodes are hash-consed on the children they fold, so a suffix
    shared by several derivations is represented once.
    """
    nodes = [BinNode(CHOICE if n.choice else ORIG, n.bag) for n in f.nodes]
    aux_of: dict[tuple[int, ...], int] = {}
    null: list[int] = []

    def null_id() -> int:
        if not null:
            nodes.append(BinNode(NULL, None))
            null.append(len(nodes) - 1)
        return null[0]

    def fold(children: tuple[int, ...]) -> tuple[int, int]:
        if len(children) == 1:
            return children[0], null_id()
        if len(children) == 2:
            return children[0], children[1]
        tail = children[1:]
        if tail not in aux_of:
            pair = fold(tail)
            nodes.append(BinNode(AUX, None, [pair]))
            aux_of[tail] = len(nodes) - 1
        return children[0], aux_of[tail]

    for i, n in enumerate(f.nodes):
        nodes[i].derivations = [fold(d) for d in n.derivations]
    return BinForest(nodes, f.root, f, null[0] if null else None)


# -- counting and enumeration --------------------------------------------------


def count_trees(f: Forest | BinForest) -> int:
    """Number of complete trees; NULL and auxiliary nodes are transparent."""
    count: dict[int, int] = {}
    for i in topo_order(f):
        node = f.nodes[i]
        if not node.derivations:
            count[i] = 1
            continue
        total = 0
        for der in node.derivations:
            prod = 1
            for c in der:
                prod *= count[c]
            total += prod
        count[i] = total
    return count[f.root]


@dataclass(frozen=True)
class TreeNode:
    """One node of an extracted tree: original forest node id and children."""

    node: int
    children: tuple["TreeNode", ...] = ()


def _expansions(f: Forest | BinForest, i: int) -> Iterator[tuple[TreeNode, ...]]:
    """Yield the original-node subtrees contributed by node ``i``.

    Bag nodes contribute one subtree; choice and auxiliary nodes contribute
    the flattened subtrees of their children; NULL contributes nothing.
    """
    node = f.nodes[i]
    kind = node.kind if isinstance(node, BinNode) else CHOICE if node.choice else ORIG
    if kind == NULL:
        yield ()
        return
    if not node.derivations:
        yield (TreeNode(i),)
        return
    for der in node.derivations:
        for parts in _product_lazy(f, der, 0):
            if kind in (AUX, CHOICE):
                yield parts
            else:
                yield (TreeNode(i, parts),)


def _product_lazy(f, der: tuple[int, ...], k: int) -> Iterator[tuple[TreeNode, ...]]:
    if k == len(der):
        yield ()
        return
    for head in _expansions(f, der[k]):
        for rest in _product_lazy(f, der, k + 1):
            yield head + rest


def iter_tree_nodes(f: Forest | BinForest) -> Iterator[TreeNode]:
    """Depth-first, deterministic stream of complete trees as node structures."""
    for (tree,) in _expansions(f, f.root):
        yield tree


def tree_to_td(f: Forest | BinForest, tree: TreeNode) -> TreeDecomposition:
    src = f.source if isinstance(f, BinForest) else f
    top = tree
    if src.nodes[top.node].bag == 0 and len(top.children) == 1:
        top = top.children[0]
    bags: list[VertexSet] = []
    arcs: list[tuple[int, int]] = []

    def walk(t: TreeNode, parent: int) -> None:
        bags.append(src.nodes[t.node].bag)
        me = len(bags) - 1
        if parent >= 0:
            arcs.append((parent, me))
        for c in t.children:
            walk(c, me)

    walk(top, -1)
    return TreeDecomposition(bags, arcs, 0)


def enumerate_trees(f: Forest | BinForest, limit: int | None = None) -> list[TreeDecomposition]:
    if limit is not None and limit < 1:
        raise ValueError("limit must be at least 1")
    out = []
    for tree in iter_tree_nodes(f):
        out.append(tree_to_td(f, tree))
        if limit is not None and len(out) >= limit:
            break
    return out
