import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import C, bag_of, amr_graph, path_graph, random_graph, random_tree
from tdforest import bitset
from tdforest.forest import (
    AUX,
    NULL,
    ORIG,
    Forest,
    ForestNode,
    ForestStructureError,
    WidthExceeded,
    bag_size_freq,
    binarize,
    build_forest,
    count_trees,
    enumerate_trees,
    freq_key,
    prune_min_bags,
)
from tdforest.graph import Graph, components_within, undirected_skeleton
from tdforest.oracle import brute_force_tds, canonical_td, root_constraint_holds
from tdforest.recognize import GraphTooLarge, validate_td

FRAGMENT_BAGS = ["ch", "chg", "hyp", "hg", "ypt"]
ALTERNATE_BAGS = ["hyt", "htp"]


def tree_codes(f) -> set[str]:
    return {canonical_td(td) for td in enumerate_trees(f)}


def leaf(bag: int) -> ForestNode:
    return ForestNode(bag, bag)


def freq_of(td, width: int) -> tuple[int, ...]:
    return bag_size_freq(td.bags, width + 2)


class TestBuild:
    def test_amr_root_constrained_has_fragment_bags(self):
        bags = build_forest(amr_graph(), 2, root_constrained=True).bags()
        for names in FRAGMENT_BAGS + ALTERNATE_BAGS:
            assert bag_of(names) in bags, names

    def test_amr_tree_counts(self):
        g = amr_graph()
        assert count_trees(build_forest(g, 2, root_constrained=True)) == 11
        assert count_trees(build_forest(g, 2)) == 23
        assert count_trees(build_forest(g, 3)) == 48

    def test_single_edge_is_one_leaf(self):
        f = build_forest(Graph(("u", "v"), ((0, 1, "x"),)), 1)
        assert len(f.nodes) == 1
        assert f.nodes[f.root].bag == 0b11 and f.nodes[f.root].is_leaf

    def test_amr_width1_exceeded(self):
        with pytest.raises(WidthExceeded, match="width exceeded"):
            build_forest(amr_graph(), 1)

    def test_width0_with_edge_exceeded(self):
        with pytest.raises(WidthExceeded):
            build_forest(path_graph(2), 0)

    def test_edgeless_graph_width0(self):
        f = build_forest(Graph(tuple("abc"), ()), 0)
        assert f.synthetic_root and count_trees(f) == 1
        (td,) = enumerate_trees(f)
        assert sorted(td.bags) == [0, 1, 2, 4]

    def test_empty_graph(self):
        f = build_forest(Graph((), ()), 2)
        assert count_trees(f) == 1 and f.nodes[f.root].bag == 0

    def test_too_many_vertices(self):
        with pytest.raises(GraphTooLarge):
            build_forest(path_graph(65), 1)

    def test_disconnected_graph_joins_under_empty_bag(self):
        g = Graph(tuple("abcde"), ((0, 1, "x"), (1, 2, "x"), (3, 4, "y")))
        f = build_forest(g, 1)
        root = f.nodes[f.root]
        assert root.bag == 0 and len(root.derivations) == 1 and len(root.derivations[0]) == 2
        assert tree_codes(f) == brute_force_tds(g, 1)

    def test_no_duplicate_states(self):
        f = build_forest(amr_graph(), 3)
        keys = [(n.bag, n.component, n.choice) for n in f.nodes]
        assert len(keys) == len(set(keys))

    def test_bag_sizes_bounded(self):
        for w in (2, 3):
            f = build_forest(amr_graph(), w)
            assert all(bitset.size(n.bag) <= w + 1 for n in f.nodes)

    def test_derivations_partition_remaining_component(self):
        g = amr_graph()
        f = build_forest(g, 3)
        for node in f.nodes:
            for der in node.derivations:
                kids = [f.nodes[c].component for c in der]
                if node.choice:
                    assert kids == [node.component]
                    continue
                union = 0
                for k in kids:
                    assert not k & union
                    union |= k
                assert union == node.component & ~node.bag
                assert [bitset.lowest(k) for k in kids] == sorted(bitset.lowest(k) for k in kids)

    def test_root_constraint_holds_for_every_tree(self):
        g = amr_graph()
        for td in enumerate_trees(build_forest(g, 2, root_constrained=True)):
            report = validate_td(g, td)
            assert report.ok and td.width <= 2
            root = td.bags[td.root]
            assert root >> C & 1 and root_constraint_holds(g, td)

    def test_root_constraint_without_root_is_a_noop(self):
        g = Graph(tuple("abc"), ((0, 1, "x"), (1, 2, "y")))
        assert tree_codes(build_forest(g, 1, root_constrained=True)) == tree_codes(build_forest(g, 1))

    def test_output_is_deterministic(self):
        a = json.dumps(build_forest(amr_graph(), 3).to_json())
        b = json.dumps(build_forest(amr_graph(), 3).to_json())
        assert a == b


class TestPrune:
    def hand_forest(self) -> Forest:
        # root derivation 0 uses three size-2 bags, derivation 1 one size-3 and two size-2 bags
        nodes = [
            ForestNode(0b111, 0b1111111, [(1, 2, 3), (4, 1, 2)]),
            leaf(0b11),
            leaf(0b110),
            leaf(0b1100),
            leaf(0b111000),
        ]
        return Forest(nodes, 0, 2)

    def test_small_first_keeps_fewer_small_bags(self):
        pruned = prune_min_bags(self.hand_forest(), 2, "small-first")
        (td,) = enumerate_trees(pruned)
        assert freq_of(td, 2) == (0, 0, 2, 2)

    def test_large_first_keeps_fewer_large_bags(self):
        pruned = prune_min_bags(self.hand_forest(), 2, "large-first")
        (td,) = enumerate_trees(pruned)
        assert freq_of(td, 2) == (0, 0, 3, 1)

    def test_ties_leave_forest_unchanged(self):
        nodes = [ForestNode(0b1, 0b111, [(1,), (2,)]), leaf(0b110), leaf(0b101)]
        f = Forest(nodes, 0, 1)
        pruned = prune_min_bags(f, 1)
        assert pruned.nodes == f.nodes and pruned.root == f.root

    def test_unknown_order(self):
        with pytest.raises(ValueError):
            freq_key((1, 2), "middle-out")

    def test_amr_width3_matches_width2_optimum(self):
        g = amr_graph()
        best2 = min(
            (freq_of(td, 3) for td in enumerate_trees(build_forest(g, 2))),
            key=freq_key,
        )
        pruned = prune_min_bags(build_forest(g, 3), 3)
        vectors = {freq_of(td, 3) for td in enumerate_trees(pruned)}
        assert vectors == {best2} == {(0, 0, 2, 2, 0)}

    @pytest.mark.parametrize("order", ["large-first", "small-first"])
    def test_pruned_trees_are_the_minimal_ones(self, order):
        g = amr_graph()
        f = build_forest(g, 3)
        everything = [freq_key(freq_of(td, 3), order) for td in enumerate_trees(f)]
        kept = {freq_key(freq_of(td, 3), order) for td in enumerate_trees(prune_min_bags(f, 3, order))}
        assert kept == {min(everything)}

    def test_tree_graph_keeps_edge_bags(self):
        g = path_graph(6)
        pruned = prune_min_bags(build_forest(g, 3), 3)
        assert all(td.width == 1 for td in enumerate_trees(pruned))


class TestBinarize:
    def test_three_children_right_fold(self):
        f = Forest([ForestNode(0b1, 0b1111, [(1, 2, 3)]), leaf(0b11), leaf(0b101), leaf(0b1001)], 0, 1)
        bf = binarize(f)
        (pair,) = bf.nodes[0].derivations
        assert pair[0] == 1
        aux = bf.nodes[pair[1]]
        assert aux.kind == AUX and aux.bag is None and aux.derivations == [(2, 3)]

    def test_single_child_pairs_with_null(self):
        f = Forest([ForestNode(0b1, 0b11, [(1,)]), leaf(0b11)], 0, 1)
        bf = binarize(f)
        assert bf.nodes[0].derivations == [(1, bf.null)]
        assert bf.nodes[bf.null].kind == NULL and not bf.nodes[bf.null].derivations

    def test_leaf_unchanged(self):
        bf = binarize(Forest([leaf(0b11)], 0, 1))
        assert len(bf.nodes) == 1 and bf.nodes[0].kind == ORIG and bf.nodes[0].bag == 0b11

    def test_null_is_shared(self):
        bf = binarize(build_forest(amr_graph(), 3))
        assert sum(1 for n in bf.nodes if n.kind == NULL) == 1

    def test_every_derivation_is_binary(self):
        bf = binarize(build_forest(amr_graph(), 3))
        assert all(len(d) == 2 for n in bf.nodes for d in n.derivations)

    def test_original_nodes_keep_their_ids(self):
        f = build_forest(amr_graph(), 2)
        bf = binarize(f)
        assert [n.bag for n in bf.nodes[: len(f.nodes)]] == [n.bag for n in f.nodes]

    def test_tree_sets_agree(self):
        f = build_forest(amr_graph(), 3)
        assert tree_codes(binarize(f)) == tree_codes(f)


class TestEnumerate:
    def test_single_node(self):
        assert len(enumerate_trees(Forest([leaf(0b11)], 0, 1))) == 1

    def test_limit_one(self):
        assert len(enumerate_trees(build_forest(amr_graph(), 3), limit=1)) == 1

    def test_limit_must_be_positive(self):
        with pytest.raises(ValueError):
            enumerate_trees(Forest([leaf(0b11)], 0, 1), limit=0)

    def test_count_two_derivations_over_leaves(self):
        f = Forest([ForestNode(0b1, 0b111, [(1,), (2,)]), leaf(0b110), leaf(0b101)], 0, 1)
        assert count_trees(f) == 2

    def test_count_matches_enumeration_amr(self):
        f = build_forest(amr_graph(), 2)
        assert count_trees(f) == len(enumerate_trees(f)) == len(tree_codes(f))

    def test_deterministic_order(self):
        f = build_forest(amr_graph(), 3)
        assert [canonical_td(t) for t in enumerate_trees(f)] == [canonical_td(t) for t in enumerate_trees(f)]


class TestJson:
    def test_roundtrip(self):
        g = amr_graph()
        f = build_forest(g, 2, root_constrained=True)
        again = Forest.from_json(json.loads(json.dumps(f.to_json(g))), g)
        assert again.nodes == f.nodes and again.root == f.root

    def test_cycle_rejected(self):
        doc = {"root": 0, "nodes": [
            {"id": 0, "bag": [0], "derivations": [[1]]},
            {"id": 1, "bag": [1], "derivations": [[0]]},
        ]}
        with pytest.raises(ForestStructureError):
            Forest.from_json(doc)

    def test_missing_bag_rejected(self):
        with pytest.raises(ForestStructureError):
            Forest.from_json({"root": 0, "nodes": [{"id": 0, "bag": None, "derivations": []}]})

    def test_binarized_json_marks_aux(self):
        doc = binarize(build_forest(amr_graph(), 3)).to_json()
        kinds = {(n["aux"], n["bag"] is None) for n in doc["nodes"]}
        assert kinds <= {(False, False), (True, True)}


def _random_case(seed: int, connected: bool = False):
    rng = random.Random(seed)
    n = rng.randint(1, 7)
    return random_graph(rng, n, rng.uniform(0.15, 0.6), connected=connected), rng.randint(1, 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.booleans())
def test_forest_matches_oracle(seed, rc):
    g, w = _random_case(seed)
    expected = brute_force_tds(g, w, root_constrained=rc)
    try:
        f = build_forest(g, w, root_constrained=rc)
    except WidthExceeded:
        assert expected == set()
        return
    assert tree_codes(f) == expected
    assert count_trees(f) == len(expected)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_enumerated_trees_are_valid(seed):
    g, w = _random_case(seed)
    try:
        f = build_forest(g, w)
    except WidthExceeded:
        return
    for td in enumerate_trees(f, limit=300):
        assert validate_td(g, td).ok and td.width <= w


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["large-first", "small-first"]))
def test_prune_keeps_reachable_nodes_alive(seed, order):
    g, w = _random_case(seed)
    try:
        f = build_forest(g, w)
    except WidthExceeded:
        return
    pruned = prune_min_bags(f, w, order)
    assert 1 <= count_trees(pruned) <= count_trees(f)
    assert all(n.derivations or n.is_leaf for n in pruned.nodes)
    assert tree_codes(pruned) <= tree_codes(f)
    assert tree_codes(pruned) == brute_force_tds(g, w, min_bags=True, freq_order=order)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_binarize_preserves_count(seed):
    g, w = _random_case(seed)
    try:
        f = build_forest(g, w)
    except WidthExceeded:
        return
    assert count_trees(binarize(f)) == count_trees(f)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 12))
def test_trees_decompose_at_width_one(seed, n):
    g = random_tree(random.Random(seed), n)
    f = build_forest(g, 1)
    skel = undirected_skeleton(g)
    assert len(components_within(skel, skel.vertices)) == 1
    assert all(validate_td(g, td).ok for td in enumerate_trees(f, limit=50))
