import random
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bag_of, amr_graph, random_graph
from tdforest.graph import Graph
from tdforest.motif import BagTooLarge, MotifTable, canonical_code, canonical_form, canonical_slots

# number of isomorphism classes of loopless digraphs on 1..4 vertices
DIGRAPH_CLASSES = {1: 1, 2: 3, 3: 16, 4: 218}


def all_digraphs(n: int):
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    for bits in product((0, 1), repeat=len(pairs)):
        yield Graph(tuple("x" * n), tuple((u, v, "e") for (u, v), b in zip(pairs, bits) if b))


def test_out_star_differs_from_directed_path():
    g = amr_graph()
    table = MotifTable()
    star = canonical_form(g, bag_of("hyp"), table)
    path = canonical_form(g, bag_of("hgc"), table)
    assert star.canonical_code != path.canonical_code and star.index != path.index


def test_isomorphic_single_edges_share_id():
    g = Graph(tuple("uvxy"), ((0, 1, "a"), (2, 3, "b")))
    table = MotifTable()
    assert canonical_form(g, 0b0011, table) == canonical_form(g, 0b1100, table)


def test_empty_bag_is_reserved():
    table = MotifTable()
    mid = canonical_form(amr_graph(), 0, table)
    assert mid.index == 0 and mid.canonical_code == b""


def test_direction_matters():
    g = Graph(tuple("abc"), ((0, 1, "x"), (1, 2, "x"), (0, 2, "y")))
    h = Graph(tuple("abc"), ((0, 1, "x"), (1, 2, "x"), (2, 0, "y")))
    assert canonical_code(g, 0b111) != canonical_code(h, 0b111)


def test_labels_are_ignored():
    g = Graph(tuple("ab"), ((0, 1, "x"),))
    h = Graph(tuple("cd"), ((1, 0, "other"),))
    assert canonical_code(g, 0b11) == canonical_code(h, 0b11)


def test_bag_too_large():
    g = Graph(tuple("abcdef"), ())
    with pytest.raises(BagTooLarge):
        canonical_code(g, 0b111111)
    assert len(canonical_code(g, 0b11111)) == 1 + 20


def test_interning_is_stable():
    table = MotifTable()
    g = amr_graph()
    first = [canonical_form(g, b, table).index for b in (bag_of("hyp"), bag_of("ch"), bag_of("hyp"))]
    assert first == [1, 2, 1] and len(table) == 3
    assert list(table.to_json().values()) == [0, 1, 2]


@pytest.mark.parametrize("n", sorted(DIGRAPH_CLASSES))
def test_separation_count(n):
    codes = {canonical_code(g, (1 << n) - 1) for g in all_digraphs(n)}
    assert len(codes) == DIGRAPH_CLASSES[n]


def test_codes_agree_with_isomorphism():
    nx = pytest.importorskip("networkx")
    n = 4
    reps: dict[bytes, object] = {}
    for g in all_digraphs(n):
        d = nx.DiGraph()
        d.add_nodes_from(range(n))
        d.add_edges_from((u, v) for u, v, _ in g.edges)
        code = canonical_code(g, (1 << n) - 1)
        if code in reps:
            assert nx.is_isomorphic(reps[code], d)
        else:
            assert not any(nx.is_isomorphic(r, d) for r in reps.values())
            reps[code] = d
    assert len(reps) == DIGRAPH_CLASSES[n]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 8))
def test_permutation_invariance(seed, n):
    rng = random.Random(seed)
    g = random_graph(rng, n, 0.4)
    perm = list(range(n))
    rng.shuffle(perm)
    verts = rng.sample(range(n), min(n, rng.randint(1, 5)))
    bag = sum(1 << v for v in verts)
    moved = sum(1 << perm[v] for v in verts)
    assert canonical_code(g, bag) == canonical_code(g.relabel(perm), moved)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6))
def test_canonical_slots_follow_relabeling(seed, n):
    rng = random.Random(seed)
    g = random_graph(rng, n, 0.5)
    perm = list(range(n))
    rng.shuffle(perm)
    bag = (1 << min(n, 5)) - 1
    moved = sum(1 << perm[v] for v in range(min(n, 5)))
    h = g.relabel(perm)
    # slot orders can differ only by a label-preserving automorphism, so the
    # label matrices they induce must agree
    def matrix(graph, slots):
        lab = graph.first_label()
        return [[lab.get((u, v)) for v in slots] for u in slots]

    assert matrix(g, canonical_slots(g, bag)) == matrix(h, canonical_slots(h, moved))
