from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cttp.colouring import ColouringModel, build_scheme, choose_scheme
from cttp.core import BOT, FiniteDistribution, Tape, resolve
from cttp.indset import IndSetModel
from cttp.model import from_edges, random_hypergraph
from cttp.oracle import (
    CoupledSource,
    InfeasiblePinning,
    OracleBudgetExceeded,
    exact_count_colourings,
    exact_count_indsets,
    exact_edge_factors,
    exact_marginal,
    exact_vertex_factors,
    forward_chain_simulate,
    list_colouring_count,
    monte_carlo_distribution,
    projected_conditional,
    projected_conditional_ie,
)

HALF = Fraction(1, 2)
ONE_EDGE = from_edges(2, [(1, 2)], 2)
TRIANGLE = from_edges(3, [(1, 2), (2, 3), (1, 3)], 2)


def brute_indsets(h):
    return sum(all(any(x[u - 1] == 0 for u in e) for e in h.edges) for x in product((0, 1), repeat=h.n))


def brute_colourings(h, q):
    return sum(
        all(len({x[u - 1] for u in e}) > 1 for e in h.edges) for x in product(range(q), repeat=h.n)
    )


@pytest.mark.parametrize(
    "h, z", [(from_edges(3, [], 2), 8), (ONE_EDGE, 3), (from_edges(3, [(1, 2, 3)], 3), 7)]
)
def test_count_indsets(h, z):
    assert exact_count_indsets(h) == z


@pytest.mark.parametrize("h, q, z", [(ONE_EDGE, 3, 6), (TRIANGLE, 3, 6), (from_edges(2, [], 2), 3, 9)])
def test_count_colourings(h, q, z):
    assert exact_count_colourings(h, q) == z


def test_marginal_examples():
    assert exact_marginal(ONE_EDGE, "indset", 1) == FiniteDistribution([(0, Fraction(2, 3)), (1, Fraction(1, 3))])
    assert exact_marginal(ONE_EDGE, "indset", 1, {2: 0}) == FiniteDistribution.uniform([0, 1])
    assert exact_marginal(ONE_EDGE, "colouring", 1, q=3) == FiniteDistribution.uniform([1, 2, 3])


def test_budget():
    with pytest.raises(OracleBudgetExceeded):
        exact_count_indsets(from_edges(30, [], 2), budget=2**20)


instances = st.builds(
    lambda n, k, m, seed: random_hypergraph(n, min(k, n), m, max_degree=3, seed=seed),
    st.integers(2, 8),
    st.sampled_from([2, 3]),
    st.integers(0, 6),
    st.integers(0, 10**6),
)


@settings(max_examples=60, deadline=None)
@given(instances)
def test_counts_match_brute_force(h):
    assert exact_count_indsets(h) == brute_indsets(h)
    if h.n <= 5:
        assert exact_count_colourings(h, 3) == brute_colourings(h, 3)


@settings(max_examples=60, deadline=None)
@given(instances)
def test_vertex_factor_identity(h):
    prod = Fraction(1)
    for f in exact_vertex_factors(h):
        assert f >= HALF
        prod *= f
    assert prod * exact_count_indsets(h) == 1


@settings(max_examples=40, deadline=None)
@given(instances, st.data())
def test_indset_conditionals_at_least_half(h, data):
    v = data.draw(st.integers(1, h.n))
    others = [u for u in h.vertices if u != v]
    pin = {u: data.draw(st.sampled_from([0, 1])) for u in others}
    try:
        law = exact_marginal(h, "indset", v, pin)
    except ValueError:
        return
    assert law.prob(0) >= HALF


@settings(max_examples=30, deadline=None)
@given(instances.filter(lambda h: h.n <= 5))
def test_edge_factor_identity(h):
    prod = Fraction(3) ** h.n
    for f in exact_edge_factors(h, 3):
        prod *= f
    assert prod == exact_count_colourings(h, 3)


def test_forward_chain_T0():
    model = IndSetModel(ONE_EDGE)
    traj = forward_chain_simulate(model, 0, seed=4)
    assert traj.final == traj.initial and not traj.updates


def test_forward_chain_no_padding():
    model = IndSetModel(from_edges(3, [(1, 2, 3)], 3))
    for seed in range(200):
        traj = forward_chain_simulate(model, 3, seed)
        if all(r is not BOT for r in traj.r.values()):
            assert traj.padding_used == 0
            assert traj.final == {model.clock.vertex_at(t): r for t, r in traj.r.items()}
            return
    pytest.fail("no all-lower-bound run in 200 seeds")


@settings(max_examples=40, deadline=None)
@given(instances, st.integers(0, 10**6), st.integers(1, 3), st.booleans())
def test_coupled_backward_matches_forward(h, seed, mult, colouring):
    if colouring:
        if h.n > 5:
            return
        model = ColouringModel(h, choose_scheme(h, 4))
    else:
        model = IndSetModel(h)
    T = mult * h.n
    traj = forward_chain_simulate(model, T, seed)
    tape = Tape()
    src = CoupledSource(traj)
    for u in h.vertices:
        got = resolve(model.clock.pred(u, 0), tape, src, model, horizon=T, initial=traj.initial)
        assert got == traj.final[u]


def test_coupled_colouring_in_regime():
    h = from_edges(4, [(1, 2, 3, 4)], 4)
    model = ColouringModel(h, choose_scheme(h, 12))
    assert model.scheme.s == 2
    for seed in range(10):
        traj = forward_chain_simulate(model, 8, seed)
        tape = Tape()
        src = CoupledSource(traj)
        for u in h.vertices:
            assert resolve(model.clock.pred(u, 0), tape, src, model, horizon=8, initial=traj.initial) == traj.final[u]


def test_monte_carlo_fair():
    emp = monte_carlo_distribution(lambda src: src.draw(FiniteDistribution.uniform([0, 1])), 10_000, 3)
    assert emp.within(0, HALF) and emp.within(1, HALF)


def test_monte_carlo_deterministic():
    emp = monte_carlo_distribution(lambda src: 5, 100, 0)
    assert emp.counts == {5: 100} and emp.stderr(5) == 0


def test_monte_carlo_perfect_sampler():
    model = IndSetModel(ONE_EDGE)
    emp = monte_carlo_distribution(lambda src: resolve(0, Tape(), src, model), 100_000, 11)
    assert emp.within(0, Fraction(2, 3))


def test_monte_carlo_reproducible():
    model = IndSetModel(TRIANGLE)
    a = monte_carlo_distribution(lambda src: resolve(0, Tape(), src, model), 2000, 5)
    b = monte_carlo_distribution(lambda src: resolve(0, Tape(), src, model), 2000, 5)
    assert a == b


@settings(max_examples=60, deadline=None)
@given(instances.filter(lambda h: h.n <= 5), st.integers(2, 4), st.data())
def test_inclusion_exclusion_matches_brute_force(h, q, data):
    assert list_colouring_count(h, {u: range(1, q + 1) for u in h.vertices}) == exact_count_colourings(h, q)
    scheme = build_scheme(q, data.draw(st.integers(1, q)))
    v = data.draw(st.integers(1, h.n))
    classes = {u: data.draw(st.integers(1, scheme.s)) for u in h.vertices if u != v}
    try:
        want = projected_conditional(h, scheme, v, classes)
    except InfeasiblePinning:
        with pytest.raises(InfeasiblePinning):
            projected_conditional_ie(h, scheme, v, classes)
        return
    assert projected_conditional_ie(h, scheme, v, classes) == want
