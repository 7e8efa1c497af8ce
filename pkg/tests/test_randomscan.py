import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cttp.core import BOT, TRUNCATED, FiniteDistribution, RngSource
from cttp.model import from_edges, random_hypergraph
from cttp.oracle import exact_marginal, monte_carlo_distribution
from cttp.randomscan import (
    IndSetGibbs,
    ScanExhausted,
    WitnessTree,
    approx_resolve_random,
    build_witness_tree,
    conditional_marginal_given_tree,
    dependency_dag,
    enumerate_witness_trees,
    random_scan_battery,
    randomscan_marginal,
    tree_probability,
)

HALF = Fraction(1, 2)
PATH2 = IndSetGibbs(from_edges(2, [(1, 2)], 2))
PATH4 = IndSetGibbs(from_edges(4, [(1, 2), (2, 3), (3, 4)], 2))


def test_root_not_bot():
    tree, A = build_witness_tree(PATH2, 1, [1], [0], 5)
    assert len(tree) == 1 and A == frozenset()
    dag = dependency_dag(PATH2, tree)
    assert dag.arcs == () and dag.boundary == frozenset()


def test_two_node_tree():
    tree, A = build_witness_tree(PATH2, 1, [1, 1, 2], [BOT, 0, 0], 5)
    assert tree.labels == (1, 2) and tree.parents == (-1, 0) and A == frozenset()
    dag = dependency_dag(PATH2, tree)
    assert dag.arcs == ((1, 0),) and dag.boundary == frozenset()


def test_budget_halt():
    tree, A = build_witness_tree(PATH4, 2, [2, 1, 3], [BOT, 0, 0], 1)
    assert len(tree) == 1 and A == {1, 3}
    assert dependency_dag(PATH4, WitnessTree.root(2, BOT)).boundary == {1, 3}


def test_scan_must_start_at_root():
    with pytest.raises(ValueError):
        build_witness_tree(PATH2, 1, [2], [0], 3)
    with pytest.raises(ScanExhausted):
        build_witness_tree(PATH2, 1, [1, 1], [BOT, 0], 3)


def test_tree_probability_single_nodes():
    assert tree_probability(PATH2, WitnessTree.root(1, 0)) == HALF
    assert tree_probability(PATH2, WitnessTree.root(1, BOT)) == HALF


def test_tree_probability_two_nodes():
    tree = WitnessTree.root(1, BOT).attach(0, 2, 0)
    assert tree_probability(PATH2, tree) == Fraction(1, 4)


def test_conditional_given_tree():
    assert conditional_marginal_given_tree(PATH2, WitnessTree.root(1, 1), 1) == 1
    tree = WitnessTree.root(1, BOT).attach(0, 2, 0)
    assert conditional_marginal_given_tree(PATH2, tree, 1) == 1
    forced = WitnessTree.root(1, BOT).attach(0, 2, BOT).attach(1, 1, 0)
    # the neighbour resolves to 1, so the root is forced to 0
    assert conditional_marginal_given_tree(PATH2, forced, 0) == 1


def test_edgeless_exact_at_K1():
    dist = randomscan_marginal(IndSetGibbs(from_edges(2, [], 2)), 1, 1)
    assert dist.probs == {0: HALF, 1: HALF} and dist.truncation_mass == 0


def test_one_edge_K6():
    dist = randomscan_marginal(PATH2, 1, 6)
    assert dist.probs == {0: Fraction(21, 32), 1: Fraction(21, 64)}
    assert dist.truncation_mass == Fraction(1, 64)
    assert abs(dist.prob(0) - Fraction(2, 3)) <= dist.truncation_mass


def test_literal_recursion_overcounts():
    trees = enumerate_witness_trees(PATH4, 2, 6)
    off = sum(tree_probability(PATH4, t, check_insertion=False) != p for t, p, _ in trees.values())
    assert off > 0
    assert all(tree_probability(PATH4, t) == p for t, p, _ in trees.values())


def test_truncated_sampler_reports_symbol():
    rng = random.Random(0)
    outs = {approx_resolve_random(PATH4, 2, 1, RngSource(rng)) for _ in range(50)}
    assert outs == {0, TRUNCATED}


def test_randomscan_rejects_zero_budget():
    with pytest.raises(ValueError):
        randomscan_marginal(PATH2, 1, 0)


models = st.sampled_from(
    [
        PATH2,
        PATH4,
        IndSetGibbs(from_edges(5, [(1, 2), (2, 3), (3, 4), (4, 5), (1, 5)], 2)),
        IndSetGibbs(from_edges(3, [(1, 2, 3)], 3)),
    ]
)


@settings(max_examples=200, deadline=None)
@given(models, st.integers(1, 12), st.integers(0, 10**9), st.data())
def test_reconstruction(model, K, seed, data):
    v = data.draw(st.sampled_from(tuple(model.vertices)))
    rng = random.Random(seed)
    scan, choices = random_scan_battery(model, v, K, rng, length=64 * (K + len(model.vertices)))
    tree, A = build_witness_tree(model, v, scan, choices, K)
    assert len(tree) <= K
    assert tree.level_unique()
    assert dependency_dag(model, tree).boundary == A


hypergraphs = st.builds(
    lambda n, k, m, seed: random_hypergraph(n, min(k, n), m, max_degree=2, seed=seed),
    st.integers(2, 4),
    st.sampled_from([2, 3]),
    st.integers(0, 3),
    st.integers(0, 10**6),
)


@settings(max_examples=25, deadline=None)
@given(hypergraphs, st.integers(1, 5), st.data())
def test_deficit_bound(h, K, data):
    v = data.draw(st.integers(1, h.n))
    dist = randomscan_marginal(IndSetGibbs(h), v, K)
    mu = exact_marginal(h, "indset", v)
    assert dist.total() == 1
    for j in (0, 1):
        assert abs(dist.prob(j) - mu.prob(j)) <= dist.truncation_mass


def test_monte_carlo_matches_enumeration():
    dist = randomscan_marginal(PATH4, 2, 5)
    emp = monte_carlo_distribution(lambda src: approx_resolve_random(PATH4, 2, 5, src), 20_000, 9)
    for outcome, p in list(dist.probs.items()) + [(TRUNCATED, dist.truncation_mass)]:
        assert emp.within(outcome, p)


def test_padding_dist_cached():
    pin = {2: 1}
    assert PATH2.padding_dist(1, pin) is PATH2.padding_dist(1, pin)
    assert PATH2.padding_dist(1, pin) == FiniteDistribution.point(0)
