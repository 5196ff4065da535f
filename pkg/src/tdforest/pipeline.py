"""Graph to edge features: forest construction, encoding and expected-tree aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, NodeStates, encode_states, states_backward, zero_grads
from .expected import (
    EdgeFeatures,
    Marginals,
    _RelCache,
    marginals,
    marginals_backward,
    relation_features,
    relation_features_backward,
)
from .forest import BinForest, binarize, build_forest, prune_min_bags
from .graph import Graph


@dataclass
class Encoding:
    graph: Graph
    forest: BinForest
    states: NodeStates
    marginals: Marginals
    features: EdgeFeatures
    _rel_cache: _RelCache


def forest_for(
    g: Graph,
    width: int,
    root_constrained: bool = False,
    min_bags: bool = False,
    freq_order: str = "large-first",
) -> BinForest:
    f = build_forest(g, width, root_constrained=root_constrained)
    if min_bags:
        f = prune_min_bags(f, width, freq_order)
    return binarize(f)


def encode(g: Graph, bf: BinForest, params: EncoderParams) -> Encoding:
    states = encode_states(bf, params, g)
    weights = _rule_weights(bf, states)
    marg = marginals(bf, weights)
    feats, cache = relation_features(
        bf, states.inside, states.outside, marg, weights, params["W4"], params["b4"], g
    )
    return Encoding(g, bf, states, marg, feats, cache)


def _rule_weights(bf: BinForest, states: NodeStates) -> list[np.ndarray]:
    # auxiliary nodes carry a single derivation whose attention weight is exactly 1
    return [w if len(w) else np.ones(len(n.derivations)) for w, n in zip(states.derivation_weights, bf.nodes)]


def encode_backward(enc: Encoding, params: EncoderParams, d_feature: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of ``sum(d_feature * enc.features.feature)``."""
    bf = enc.forest
    weights = _rule_weights(bf, enc.states)
    rel = relation_features_backward(
        bf, enc.marginals, weights, enc._rel_cache, np.asarray(d_feature, dtype=np.float64),
        params["W4"], params.config.hidden,
    )
    d_w = marginals_backward(bf, weights, enc.marginals, rel["mass"])
    d_weights = [a + b for a, b in zip(d_w, rel["weights"])]
    grads = zero_grads(params)
    grads["W4"] += rel["W4"]
    grads["b4"] += rel["b4"]
    return states_backward(enc.states, params, rel["inside"], rel["outside"], d_weights, grads)


def encode_graph(
    g: Graph,
    params: EncoderParams,
    root_constrained: bool = False,
    min_bags: bool = False,
    freq_order: str = "large-first",
) -> Encoding:
    bf = forest_for(g, params.config.width, root_constrained, min_bags, freq_order)
    return encode(g, bf, params)
