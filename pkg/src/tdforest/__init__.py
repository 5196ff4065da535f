"""Tree decomposition forests of graphs and a forest encoder producing edge features."""

from .encoder import EncoderConfig, EncoderParams, NodeStates, encode_states
from .expected import EdgeFeatures, Marginals, marginals, new_relations, relation_features
from .forest import (
    BinForest,
    Forest,
    ForestSkip,
    WidthExceeded,
    binarize,
    build_forest,
    count_trees,
    enumerate_trees,
    prune_min_bags,
)
from .graph import Graph, GraphFormatError, graph_from_obj, graph_stats, parse_graph
from .motif import MotifTable, canonical_form
from .pipeline import Encoding, encode, encode_backward, encode_graph, forest_for
from .recognize import TreeDecomposition, treewidth, validate_td

__version__ = "0.1.0"

__all__ = [
    "BinForest",
    "EdgeFeatures",
    "EncoderConfig",
    "EncoderParams",
    "Encoding",
    "Forest",
    "ForestSkip",
    "Graph",
    "GraphFormatError",
    "Marginals",
    "MotifTable",
    "NodeStates",
    "TreeDecomposition",
    "WidthExceeded",
    "binarize",
    "build_forest",
    "canonical_form",
    "count_trees",
    "encode",
    "encode_backward",
    "encode_graph",
    "encode_states",
    "enumerate_trees",
    "forest_for",
    "graph_from_obj",
    "graph_stats",
    "marginals",
    "new_relations",
    "parse_graph",
    "prune_min_bags",
    "relation_features",
    "treewidth",
    "validate_td",
]
