"""Expected-tree marginals over a weighted forest and per-edge relation features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .bitset import VertexSet
from .forest import BinForest, ForestStructureError, topo_order
from .graph import Graph


@dataclass
class Marginals:
    mass: np.ndarray  # expected number of occurrences of each node
    messages: list[np.ndarray]  # per node, its mass times each derivation weight
    order: list[int]  # parents before children


def marginals(bf: BinForest, weights: Sequence[np.ndarray]) -> Marginals:
    """Top-down sum-product: each rule A -> B C passes mass(A) * w to both B and C."""
    order = list(reversed(topo_order(bf)))
    mass = np.zeros(len(bf.nodes))
    mass[bf.root] = 1.0
    messages = [np.zeros(0) for _ in bf.nodes]
    for a in order:
        node = bf.nodes[a]
        if not node.derivations:
            continue
        w = np.asarray(weights[a], dtype=np.float64)
        if len(w) != len(node.derivations):
            raise ForestStructureError(f"node {a}: {len(w)} weights for {len(node.derivations)} derivations")
        msg = mass[a] * w
        messages[a] = msg
        for m, der in zip(msg, node.derivations):
            for child in der:
                mass[child] += m
    return Marginals(mass, messages, order)


def marginals_backward(
    bf: BinForest,
    weights: Sequence[np.ndarray],
    marg: Marginals,
    d_mass: np.ndarray,
    d_messages: Sequence[np.ndarray] | None = None,
) -> list[np.ndarray]:
    """Gradient with respect to the derivation weights."""
    d_mass = np.array(d_mass, dtype=np.float64)
    d_w = [np.zeros(len(n.derivations)) for n in bf.nodes]
    for a in reversed(marg.order):
        node = bf.nodes[a]
        if not node.derivations:
            continue
        w = np.asarray(weights[a], dtype=np.float64)
        d_msg = np.array([sum(d_mass[child] for child in der) for der in node.derivations])
        if d_messages is not None and len(d_messages[a]):
            d_msg = d_msg + d_messages[a]
        d_w[a] += d_msg * marg.mass[a]
        d_mass[a] += d_msg @ w
    return d_w


def new_relations(parent_bag: VertexSet, child_bag: VertexSet, g: Graph) -> list[int]:
    """Indices of edges inside the child bag not already inside the shared part.

    Self-loops never count.
    """
    shared = parent_bag & child_bag
    out = []
    for i, (u, v, _) in enumerate(g.edges):
        if u == v or not (child_bag >> u & 1 and child_bag >> v & 1):
            continue
        if shared >> u & 1 and shared >> v & 1:
            continue
        out.append(i)
    return out


@dataclass
class EdgeFeatures:
    edges: list[int]  # indices into g.edges (self-loops excluded)
    occurrences: list[int]
    weight: np.ndarray
    feature: np.ndarray

    def to_json(self, g: Graph) -> dict[str, Any]:
        rows = []
        for row, idx in enumerate(self.edges):
            u, v, _ = g.edges[idx]
            rows.append(
                {
                    "src": g.external_id(u),
                    "dst": g.external_id(v),
                    "occ": self.occurrences[row],
                    "weight": float(self.weight[row]),
                    "feature": [float(x) for x in self.feature[row]],
                }
            )
        return {"edges": rows}


@dataclass
class _RelCache:
    arcs: list[tuple[int, int, list[int]]]  # (node, derivation or -1 for the virtual arc, edge rows)
    nodes: list[int]
    inputs: np.ndarray
    pre: np.ndarray
    feat: np.ndarray
    node_row: dict[int, int]


def _arcs(bf: BinForest, g: Graph, rows: dict[int, int]) -> list[tuple[int, int, list[int]]]:
    src = bf.source
    arcs = []
    root = src.nodes[src.root]
    if root.bag:
        # decomposition root is a real bag: attach it to the empty root above it
        arcs.append((src.root, -1, [rows[i] for i in new_relations(0, root.bag, g)]))
    for a in topo_order(src):
        node = src.nodes[a]
        for r, der in enumerate(node.derivations):
            hits = []
            for child in der:
                hits += [rows[i] for i in new_relations(node.bag, src.nodes[child].bag, g)]
            if hits:
                arcs.append((a, r, hits))
    return arcs


def relation_features(
    bf: BinForest,
    inside: np.ndarray,
    outside: np.ndarray,
    marg: Marginals,
    weights: Sequence[np.ndarray],
    w4: np.ndarray,
    b4: np.ndarray,
    g: Graph,
) -> tuple[EdgeFeatures, _RelCache]:
    """Accumulate ``m * relu([e_A; out_A] @ W4 + b4)`` onto each newly covered edge."""
    edges = [i for i, (u, v, _) in enumerate(g.edges) if u != v]
    rows = {idx: row for row, idx in enumerate(edges)}
    occ_all = g.edge_occurrences()
    arcs = _arcs(bf, g, rows)

    covered = set()
    for _, _, hits in arcs:
        covered.update(hits)
    if len(covered) != len(edges):
        missing = [g.edges[edges[r]][:2] for r in range(len(edges)) if r not in covered]
        raise ForestStructureError(f"edges not covered by any forest bag: {missing}")

    nodes = sorted({a for a, _, _ in arcs})
    node_row = {a: i for i, a in enumerate(nodes)}
    inputs = np.concatenate([inside[nodes], outside[nodes]], axis=1) if nodes else np.zeros((0, w4.shape[0]))
    pre = inputs @ w4 + b4
    feat = np.maximum(pre, 0.0)

    weight = np.zeros(len(edges))
    out = np.zeros((len(edges), len(b4)))
    for a, r, hits in arcs:
        m = 1.0 if r < 0 else marg.mass[a] * weights[a][r]
        for row in hits:
            weight[row] += m
            out[row] += m * feat[node_row[a]]
    result = EdgeFeatures(edges, [occ_all[i] for i in edges], weight, out)
    return result, _RelCache(arcs, nodes, inputs, pre, feat, node_row)


def relation_features_backward(
    bf: BinForest,
    marg: Marginals,
    weights: Sequence[np.ndarray],
    cache: _RelCache,
    d_feature: np.ndarray,
    w4: np.ndarray,
    hidden: int,
) -> dict[str, Any]:
    """Gradients on node states, marginals, weights and the output layer."""
    n = len(bf.nodes)
    d_feat = np.zeros_like(cache.feat)
    d_mass = np.zeros(n)
    d_w = [np.zeros(len(node.derivations)) for node in bf.nodes]
    for a, r, hits in cache.arcs:
        f = cache.feat[cache.node_row[a]]
        g_sum = d_feature[hits].sum(axis=0)
        if r < 0:
            d_feat[cache.node_row[a]] += g_sum
            continue
        m = marg.mass[a] * weights[a][r]
        d_feat[cache.node_row[a]] += m * g_sum
        d_m = float(f @ g_sum)
        d_mass[a] += d_m * weights[a][r]
        d_w[a][r] += d_m * marg.mass[a]
    d_pre = d_feat * (cache.pre > 0)
    d_inputs = d_pre @ w4.T
    d_inside = np.zeros((n, hidden))
    d_outside = np.zeros((n, hidden))
    for a, row in cache.node_row.items():
        d_inside[a] += d_inputs[row, :hidden]
        d_outside[a] += d_inputs[row, hidden:]
    return {
        "inside": d_inside,
        "outside": d_outside,
        "mass": d_mass,
        "weights": d_w,
        "W4": cache.inputs.T @ d_pre,
        "b4": d_pre.sum(axis=0),
    }
