"""Seeded instance families shared by the test modules."""

import random

from cttp.model import from_edges, random_hypergraph

INDSET_FIXTURES = 50
EDGE_DENSITY = 0.5


def indset_fixture(seed: int):
    """n in 4..10, k in {2, 3}, max degree <= 3, about n/(2k) * 3 edges."""
    rng = random.Random(1000 + seed)
    k = rng.choice((2, 3))
    n = rng.randint(4, 10)
    m = max(1, int(EDGE_DENSITY * 3 * n / k))
    return random_hypergraph(n, k, m=m, max_degree=3, seed=seed)


def indset_fixtures():
    return [indset_fixture(s) for s in range(INDSET_FIXTURES)]


def colouring_fixtures():
    """(hypergraph, q) pairs with n <= 6, k in {2, 3}, m <= 4, q in {3, 4, 6}."""
    out = [
        (from_edges(2, [(1, 2)]), 3),
        (from_edges(3, [(1, 2), (2, 3), (1, 3)]), 3),
        (from_edges(3, []), 3),
        (from_edges(2, []), 4),
    ]
    rng = random.Random(77)
    for seed in range(14):
        k = rng.choice((2, 3))
        n = rng.randint(k, 6)
        m = rng.randint(1, 4)
        q = rng.choice((3, 4, 6))
        h = random_hypergraph(n, k, m=m, max_degree=3, seed=500 + seed)
        out.append((h, q))
    return out


def one_edge(k: int):
    return from_edges(k, [tuple(range(1, k + 1))])


PATH4 = from_edges(4, [(1, 2), (2, 3), (3, 4)])
CYCLE5 = from_edges(5, [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1)])
