"""Inside-outside encoding of a binarized decomposition forest.

Row-vector convention throughout: a layer computes ``x @ W + b``.  Every
forward step keeps what its backward step needs, so gradients of any scalar
loss over the node states can be pulled back to the parameters.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import bitset
from .forest import CHOICE, NULL, ORIG, BinForest, ForestStructureError, topo_order
from .graph import Graph
from .motif import canonical_code, canonical_slots


@dataclass(frozen=True)
class EncoderConfig:
    width: int = 3
    rel_dim: int = 64
    motif_dim: int = 32
    hidden: int = 64
    depth_dim: int = 8
    edge_dim: int = 8
    attn_dim: int = 0  # 0 means ``hidden``
    max_depth: int = 16
    label_rows: int = 256
    motif_rows: int = 512

    def __post_init__(self):
        for name, val in asdict(self).items():
            if name == "attn_dim":
                if val < 0:
                    raise ValueError("attn_dim must be non-negative")
            elif name == "width":
                if val < 0:
                    raise ValueError("width must be non-negative")
            elif val <= 0:
                raise ValueError(f"{name} must be positive")
        if self.label_rows < 2 or self.motif_rows < 2:
            raise ValueError("embedding tables need a reserved row plus at least one more")

    @property
    def slots(self) -> int:
        return self.width + 1

    @property
    def attn(self) -> int:
        return self.attn_dim or self.hidden

    def shapes(self) -> dict[str, tuple[int, ...]]:
        k, r, m, h, d = self.slots, self.rel_dim, self.motif_dim, self.hidden, self.depth_dim
        return {
            "label_emb": (self.label_rows, r),
            "motif_emb": (self.motif_rows, m),
            "W1": (k * (k - 1) * r + m, h),
            "b1": (h,),
            "root_bias": (h,),
            "W2": (2 * (h + d), h),
            "b2": (h,),
            "W3": (2 * (h + d), h),
            "b3": (h,),
            "depth_in": (self.max_depth + 1, d),
            "depth_out": (self.max_depth + 1, d),
            "Q": (h, self.attn),
            "K": (h, self.attn),
            "V": (h, h),
            "W4": (2 * h, self.edge_dim),
            "b4": (self.edge_dim,),
        }


class EncoderParams:
    """Named float64 tensors for the forest encoder."""

    def __init__(self, config: EncoderConfig, tensors: dict[str, np.ndarray]):
        shapes = config.shapes()
        if set(tensors) != set(shapes):
            raise ValueError(f"tensor names differ from {sorted(shapes)}")
        for name, shape in shapes.items():
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite entries")
            tensors[name] = arr
        self.config = config
        self.tensors = {name: tensors[name] for name in shapes}

    @classmethod
    def initialize(cls, config: EncoderConfig, seed: int = 0, scale: float = 0.1) -> "EncoderParams":
        rng = np.random.default_rng(seed)
        tensors = {name: rng.uniform(-scale, scale, size=shape) for name, shape in config.shapes().items()}
        return cls(config, tensors)

    @classmethod
    def zeros(cls, config: EncoderConfig) -> "EncoderParams":
        return cls(config, {name: np.zeros(shape) for name, shape in config.shapes().items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def to_json(self) -> dict[str, Any]:
        return {
            "config": asdict(self.config),
            "tensors": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in self.tensors.items()
            },
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "EncoderParams":
        config = EncoderConfig(**doc["config"])
        tensors = {
            name: np.asarray(t["data"], dtype=np.float64).reshape(t["shape"])
            for name, t in doc["tensors"].items()
        }
        return cls(config, tensors)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "EncoderParams":
        return cls.from_json(json.loads(Path(path).read_text()))


def label_row(label: str, rows: int) -> int:
    return 1 + zlib.crc32(label.encode("utf-8")) % (rows - 1)


def motif_row(code: bytes, rows: int) -> int:
    return 0 if not code else 1 + zlib.crc32(code) % (rows - 1)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


# -- depths --------------------------------------------------------------------


def leaf_depths(bf: BinForest) -> list[int]:
    """Longest distance down to a leaf; leaves are 0."""
    depth = [0] * len(bf.nodes)
    for i in topo_order(bf):
        kids = [c for der in bf.nodes[i].derivations for c in der]
        depth[i] = max((depth[c] + 1 for c in kids), default=0)
    return depth


def root_depths(bf: BinForest) -> list[int]:
    """Longest distance from the root; the root is 0."""
    depth = [0] * len(bf.nodes)
    for i in reversed(topo_order(bf)):
        for der in bf.nodes[i].derivations:
            for c in der:
                depth[c] = max(depth[c], depth[i] + 1)
    return depth


# -- bag initialisation --------------------------------------------------------


@dataclass
class _InitCache:
    bag_rows: np.ndarray  # node -> row of X, or -1
    label_idx: np.ndarray  # (bags, k(k-1))
    motif_idx: np.ndarray  # (bags,)
    x: np.ndarray
    z: np.ndarray
    root_nodes: list[int]


def _bag_features(g: Graph, bag: int, config: EncoderConfig) -> tuple[list[int], int]:
    k = config.slots
    if bitset.size(bag) > k:
        raise ValueError(f"bag of {bitset.size(bag)} vertices exceeds {k} slots")
    slots: list[int | None] = list(canonical_slots(g, bag))
    slots += [None] * (k - len(slots))
    labels = g.first_label()
    rows = []
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            lab = None
            if slots[i] is not None and slots[j] is not None:
                lab = labels.get((slots[i], slots[j]))
            rows.append(0 if lab is None else label_row(lab, config.label_rows))
    return rows, motif_row(canonical_code(g, bag), config.motif_rows)


def init_embeddings(bf: BinForest, params: EncoderParams, g: Graph) -> tuple[np.ndarray, _InitCache]:
    """Initial state of every node: bag embedding, root bias for the empty bag, zeros otherwise."""
    cfg = params.config
    n = len(bf.nodes)
    out = np.zeros((n, cfg.hidden))
    bag_rows = np.full(n, -1)
    unique: dict[int, int] = {}
    label_idx, motif_idx, roots = [], [], []
    for i, node in enumerate(bf.nodes):
        if node.kind not in (ORIG, CHOICE):
            continue
        if node.bag == 0:
            roots.append(i)
            continue
        if node.bag not in unique:
            labs, mot = _bag_features(g, node.bag, cfg)
            unique[node.bag] = len(label_idx)
            label_idx.append(labs)
            motif_idx.append(mot)
        bag_rows[i] = unique[node.bag]
    pairs = cfg.slots * (cfg.slots - 1)
    label_arr = np.asarray(label_idx, dtype=np.int64).reshape(-1, pairs)
    motif_arr = np.asarray(motif_idx, dtype=np.int64)
    x = np.concatenate(
        [params["label_emb"][label_arr].reshape(len(label_arr), -1), params["motif_emb"][motif_arr]],
        axis=1,
    )
    z = x @ params["W1"] + params["b1"]
    has_bag = bag_rows >= 0
    out[has_bag] = relu(z)[bag_rows[has_bag]]
    for i in roots:
        out[i] = params["root_bias"]
    return out, _InitCache(bag_rows, label_arr, motif_arr, x, z, roots)


def init_bag_embedding(bf: BinForest, node: int, params: EncoderParams, g: Graph) -> np.ndarray:
    """Initial state of a single node (see :func:`init_embeddings`)."""
    n = bf.nodes[node]
    if n.kind not in (ORIG, CHOICE):
        return np.zeros(params.config.hidden)
    if n.bag == 0:
        return params["root_bias"].copy()
    labs, mot = _bag_features(g, n.bag, params.config)
    x = np.concatenate([params["label_emb"][labs].ravel(), params["motif_emb"][mot]])
    return relu(x @ params["W1"] + params["b1"])


def _init_backward(d_init: np.ndarray, cache: _InitCache, params: EncoderParams, grads: dict) -> None:
    cfg = params.config
    for i in cache.root_nodes:
        grads["root_bias"] += d_init[i]
    if len(cache.x) == 0:
        return
    d_b = np.zeros_like(cache.z)
    has_bag = cache.bag_rows >= 0
    np.add.at(d_b, cache.bag_rows[has_bag], d_init[has_bag])
    dz = d_b * (cache.z > 0)
    grads["W1"] += cache.x.T @ dz
    grads["b1"] += dz.sum(axis=0)
    dx = dz @ params["W1"].T
    pairs = cache.label_idx.shape[1]
    r = cfg.rel_dim
    np.add.at(grads["label_emb"], cache.label_idx, dx[:, : pairs * r].reshape(len(dx), pairs, r))
    np.add.at(grads["motif_emb"], cache.motif_idx, dx[:, pairs * r :])


# -- derivation attention ------------------------------------------------------


@dataclass
class _AttnCache:
    query_state: np.ndarray
    q: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    cand: np.ndarray
    weights: np.ndarray


def _attend(query_state: np.ndarray, cand: np.ndarray, params: EncoderParams) -> tuple[np.ndarray, _AttnCache]:
    q = query_state @ params["Q"]
    keys = cand @ params["K"]
    values = cand @ params["V"]
    scores = keys @ q / np.sqrt(params.config.attn)
    scores -= scores.max()
    w = np.exp(scores)
    w /= w.sum()
    return w @ values, _AttnCache(query_state, q, keys, values, cand, w)


def derivation_attention(
    query: np.ndarray, candidates: list[np.ndarray] | np.ndarray, params: EncoderParams
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled dot-product attention of one query over derivation states.

    Returns the simplex weights and the weighted sum of value projections.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if len(cand) == 0:
        raise ValueError("attention needs at least one candidate")
    combined, cache = _attend(np.asarray(query, dtype=np.float64), cand, params)
    return cache.weights, combined


def _attend_backward(
    d_out: np.ndarray, d_w_extra: np.ndarray | None, c: _AttnCache, params: EncoderParams, grads: dict
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (d_cand, d_query_state)."""
    scale = 1.0 / np.sqrt(params.config.attn)
    d_values = np.outer(c.weights, d_out)
    d_w = c.values @ d_out
    if d_w_extra is not None:
        d_w = d_w + d_w_extra
    d_scores = c.weights * (d_w - c.weights @ d_w)
    d_q = (c.keys.T @ d_scores) * scale
    d_keys = np.outer(d_scores, c.q) * scale
    grads["V"] += c.cand.T @ d_values
    grads["K"] += c.cand.T @ d_keys
    grads["Q"] += np.outer(c.query_state, d_q)
    d_cand = d_values @ params["V"].T + d_keys @ params["K"].T
    return d_cand, params["Q"] @ d_q


# -- inside and outside passes -------------------------------------------------


@dataclass
class _DerivCache:
    node: int
    inputs: list[tuple[int, int]]  # two (state node or -1, depth row) entries per candidate
    t: np.ndarray
    pre: np.ndarray
    attn: _AttnCache


@dataclass
class NodeStates:
    init: np.ndarray
    inside: np.ndarray
    outside: np.ndarray
    leaf_depth: list[int]
    root_depth: list[int]
    derivation_weights: list[np.ndarray]
    outside_weights: list[np.ndarray]
    outside_arcs: list[list[tuple[int, int, int]]] = field(default_factory=list)
    reach: frozenset[int] = frozenset()
    root: int = 0
    _init_cache: _InitCache | None = None
    _inside_cache: list[_DerivCache] = field(default_factory=list)
    _outside_cache: list[_DerivCache] = field(default_factory=list)


def _gap(a: int, b: int, max_depth: int) -> int:
    return min(max(a - b, 1), max_depth)


def inside_pass(bf: BinForest, params: EncoderParams, g: Graph) -> NodeStates:
    cfg = params.config
    init, init_cache = init_embeddings(bf, params, g)
    d_leaf = leaf_depths(bf)
    d_root = root_depths(bf)
    n = len(bf.nodes)
    inside = np.zeros((n, cfg.hidden))
    weights: list[np.ndarray] = [np.zeros(0) for _ in range(n)]
    caches = []
    table, w2, b2 = params["depth_in"], params["W2"], params["b2"]
    reach = topo_order(bf)
    for a in sorted(reach, key=lambda i: d_leaf[i]):
        node = bf.nodes[a]
        if not node.derivations:
            inside[a] = init[a]
            continue
        rows, inputs = [], []
        for b1, b2_ in node.derivations:
            parts = []
            for b in (b1, b2_):
                if bf.nodes[b].kind == NULL:
                    parts += [np.zeros(cfg.hidden), table[0]]
                    inputs.append((-1, 0))
                else:
                    gap = _gap(d_leaf[a], d_leaf[b], cfg.max_depth)
                    parts += [inside[b], table[gap]]
                    inputs.append((b, gap))
            rows.append(np.concatenate(parts))
        t = np.asarray(rows)
        pre = t @ w2 + b2
        combined, attn = _attend(init[a], relu(pre), params)
        inside[a] = combined
        weights[a] = attn.weights
        caches.append(_DerivCache(a, inputs, t, pre, attn))
    return NodeStates(
        init=init,
        inside=inside,
        outside=np.zeros_like(inside),
        leaf_depth=d_leaf,
        root_depth=d_root,
        derivation_weights=weights,
        outside_weights=[np.zeros(0) for _ in range(n)],
        reach=frozenset(reach),
        root=bf.root,
        _init_cache=init_cache,
        _inside_cache=caches,
    )


def outside_pass(bf: BinForest, params: EncoderParams, states: NodeStates) -> NodeStates:
    """Top-down pass; one outside derivation per (parent, derivation, position) occurrence."""
    cfg = params.config
    d_root = states.root_depth
    parents = bf.parents()
    reach = states.reach
    outside = np.zeros_like(states.inside)
    caches = []
    table, w3, b3 = params["depth_out"], params["W3"], params["b3"]
    zero_pad = np.zeros(cfg.depth_dim)
    arcs: list[list[tuple[int, int, int]]] = [[] for _ in bf.nodes]
    for a in sorted(reach, key=lambda i: d_root[i]):
        if a == bf.root:
            outside[a] = states.init[a]
            continue
        if bf.nodes[a].kind == NULL:
            continue
        occ = [p for p in parents[a] if p[0] in reach]
        rows, inputs = [], []
        for c1, r, pos in occ:
            sib = bf.nodes[c1].derivations[r][1 - pos]
            gap = _gap(d_root[a], d_root[c1], cfg.max_depth)
            sib_state = np.zeros(cfg.hidden) if bf.nodes[sib].kind == NULL else states.inside[sib]
            rows.append(np.concatenate([outside[c1], table[gap], sib_state, zero_pad]))
            inputs += [(c1, gap), (-1 if bf.nodes[sib].kind == NULL else sib, -1)]
        t = np.asarray(rows)
        pre = t @ w3 + b3
        combined, attn = _attend(states.init[a], relu(pre), params)
        outside[a] = combined
        states.outside_weights[a] = attn.weights
        arcs[a] = occ
        caches.append(_DerivCache(a, inputs, t, pre, attn))
    states.outside = outside
    states.outside_arcs = arcs
    states._outside_cache = caches
    return states


def encode_states(bf: BinForest, params: EncoderParams, g: Graph) -> NodeStates:
    if bf.source.width > params.config.width:
        raise ForestStructureError(
            f"forest width {bf.source.width} exceeds encoder width {params.config.width}"
        )
    return outside_pass(bf, params, inside_pass(bf, params, g))


def zero_grads(params: EncoderParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.tensors.items()}


def states_backward(
    states: NodeStates,
    params: EncoderParams,
    d_inside: np.ndarray,
    d_outside: np.ndarray,
    d_weights: list[np.ndarray] | None = None,
    grads: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Pull gradients on inside/outside states and inside derivation weights back to params."""
    cfg = params.config
    h, d = cfg.hidden, cfg.depth_dim
    grads = zero_grads(params) if grads is None else grads
    d_inside = np.array(d_inside, dtype=np.float64)
    d_outside = np.array(d_outside, dtype=np.float64)
    d_init = np.zeros_like(states.init)

    for c in reversed(states._outside_cache):
        d_cand, d_q = _attend_backward(d_outside[c.node], None, c.attn, params, grads)
        d_init[c.node] += d_q
        d_pre = d_cand * (c.pre > 0)
        grads["W3"] += c.t.T @ d_pre
        grads["b3"] += d_pre.sum(axis=0)
        d_t = d_pre @ params["W3"].T
        for row in range(len(c.t)):
            (parent, gap), (sib, _) = c.inputs[2 * row], c.inputs[2 * row + 1]
            d_outside[parent] += d_t[row, :h]
            grads["depth_out"][gap] += d_t[row, h : h + d]
            if sib >= 0:
                d_inside[sib] += d_t[row, h + d : 2 * h + d]
    # the root's outside state is its initial state
    d_init[states.root] += d_outside[states.root]

    inside_nodes = set()
    for c in reversed(states._inside_cache):
        inside_nodes.add(c.node)
        extra = None if d_weights is None else d_weights[c.node]
        d_cand, d_q = _attend_backward(d_inside[c.node], extra, c.attn, params, grads)
        d_init[c.node] += d_q
        d_pre = d_cand * (c.pre > 0)
        grads["W2"] += c.t.T @ d_pre
        grads["b2"] += d_pre.sum(axis=0)
        d_t = d_pre @ params["W2"].T
        for row in range(len(c.t)):
            for slot in range(2):
                b, gap = c.inputs[2 * row + slot]
                off = slot * (h + d)
                grads["depth_in"][gap] += d_t[row, off + h : off + h + d]
                if b >= 0:
                    d_inside[b] += d_t[row, off : off + h]
    for i in states.reach:
        if i not in inside_nodes:
            # leaves: inside state is the initial state
            d_init[i] += d_inside[i]
    _init_backward(d_init, states._init_cache, params, grads)
    return grads
