import random

import pytest

from tdforest.graph import Graph, components_within, undirected_skeleton

# vertex ids of the six-concept example AMR
C, G, H, Y, P, T = range(6)
NAMES = "cghypt"


def amr_graph() -> Graph:
    return Graph(
        ("contrast-01", "good-02", "have-03", "you", "point", "talk-01"),
        (
            (C, H, "arg2"),
            (H, G, "arg1-of"),
            (H, P, "arg1"),
            (P, T, "arg2"),
            (H, Y, "arg0"),
            (T, Y, "arg0"),
        ),
        root=C,
    )


def bag_of(names: str) -> int:
    return sum(1 << NAMES.index(ch) for ch in names)


def path_graph(n: int) -> Graph:
    return Graph(tuple(f"v{i}" for i in range(n)), tuple((i, i + 1, "next") for i in range(n - 1)), root=0)


def cycle_graph(n: int) -> Graph:
    return Graph(tuple(f"v{i}" for i in range(n)), tuple((i, (i + 1) % n, "next") for i in range(n)), root=0)


def complete_graph(n: int) -> Graph:
    return Graph(
        tuple(f"k{i}" for i in range(n)),
        tuple((u, v, "e") for u in range(n) for v in range(u + 1, n)),
        root=0,
    )


def grid_graph(side: int) -> Graph:
    idx = lambda r, c: r * side + c  # noqa: E731
    edges = [(idx(r, c), idx(r, c + 1), "h") for r in range(side) for c in range(side - 1)]
    edges += [(idx(r, c), idx(r + 1, c), "v") for r in range(side - 1) for c in range(side)]
    return Graph(tuple(f"g{i}" for i in range(side * side)), tuple(edges), root=0)


def star_graph(leaves: int) -> Graph:
    return Graph(tuple(f"s{i}" for i in range(leaves + 1)), tuple((0, i, "arm") for i in range(1, leaves + 1)), root=0)


def is_connected(g: Graph) -> bool:
    skel = undirected_skeleton(g)
    return len(components_within(skel, skel.vertices)) <= 1


def random_graph(
    rng: random.Random,
    n: int,
    p: float,
    connected: bool = False,
    directed_pairs: bool = True,
    labels: tuple[str, ...] = ("arg0", "arg1", "mod"),
) -> Graph:
    """Random labeled digraph; with ``connected`` resampled until connected."""
    while True:
        edges = []
        for u in range(n):
            for v in range(n):
                if u == v or (not directed_pairs and v < u):
                    continue
                if rng.random() < p:
                    edges.append((u, v, rng.choice(labels)))
        g = Graph(tuple(rng.choice(("a", "b", "c")) for _ in range(n)), tuple(edges), root=0 if n else None)
        if not connected or is_connected(g):
            return g


def random_tree(rng: random.Random, n: int) -> Graph:
    edges = tuple((rng.randrange(i), i, "arg") for i in range(1, n))
    return Graph(tuple(f"t{i}" for i in range(n)), edges, root=0)


@pytest.fixture
def amr() -> Graph:
    return amr_graph()


def corpus_graphs() -> list[tuple[str, Graph]]:
    """Named graphs shared by the corpus-wide checks."""
    graphs = [
        ("amr", amr_graph()),
        ("grid3", grid_graph(3)),
        ("k4", complete_graph(4)),
        ("star5", star_graph(5)),
        ("path6", path_graph(6)),
        ("two-components", Graph(tuple("abcde"), ((0, 1, "x"), (1, 2, "y"), (3, 4, "z")), root=0)),
        ("loop-and-parallel", Graph(tuple("abc"), ((0, 0, "self"), (0, 1, "x"), (0, 1, "y"), (1, 0, "z"), (1, 2, "w")), root=0)),
        ("isolated-vertex", Graph(tuple("abc"), ((0, 1, "x"),), root=2)),
    ]
    graphs += [(f"cycle{n}", cycle_graph(n)) for n in range(4, 9)]
    rng = random.Random(77)
    for i in range(20):
        n = rng.randint(2, 8)
        graphs.append((f"random{i}", random_graph(rng, n, rng.uniform(0.15, 0.4))))
    return graphs

