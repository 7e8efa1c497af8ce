"""Hypergraph independent sets under the all-zero lower bound."""

from __future__ import annotations

import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import (
    _order_key,
    BOT,
    TRUNCATED,
    BoundaryContractError,
    FiniteDistribution,
    ModelSpec,
    RandomSource,
    Tape,
    approx_resolve,
    padding_from_marginal,
)
from .derandomise import (
    EnumerationBudget,
    FactorReport,
    _Accumulator,
    _check,
    assemble_count,
    certified_factor,
    ceil_log2_inv,
    enumerate_distribution,
)
from . import _fastindset
from .model import Hypergraph, prune_for_vertex_decomposition

HALF = Fraction(1, 2)
LB_DIST = FiniteDistribution([(0, HALF), (BOT, HALF)])


@dataclass
class IndSetBoundary:
    sigma: dict = field(default_factory=dict)
    forced: bool = False


class IndSetModel(ModelSpec):
    """Uniform distribution over independent sets of ``h`` (spins 0/1, 1 = in the set).

    ``lazy`` (default) stops inspecting an edge as soon as its outcome is
    decided, which is the short-circuit reading of the sampler's ``for all``
    tests.  ``lazy=False`` draws and resolves every vertex of the edge first.
    """

    def __init__(self, h: Hypergraph, lazy: bool = True):
        self.h = h
        self.lazy = lazy
        self._padding_cache = {}
        self._others = [()] + [
            tuple(tuple(u for u in h.edges[idx] if u != v) for idx in h.incident_edges(v))
            for v in h.vertices
        ]
        super().__init__(h.n)

    def lower_bound_dist(self):
        return LB_DIST

    def boundary(self, t, oracle):
        n = self.n
        v = t % n + 1
        out = IndSetBoundary()
        for others in self._others[v]:
            times = [t - (t - u + 1) % n for u in others]
            if self.lazy:
                known = None
                for u, s in zip(others, times):
                    if oracle.lb(s) is not BOT:
                        known = u
                        break
                if known is not None:
                    out.sigma[known] = 0
                    continue
                for u, s in zip(others, times):
                    x = oracle.resolve(s)
                    out.sigma[u] = x
                    if x == 0:
                        break
                else:
                    out.forced = True
                    return out
            else:
                lbs = [oracle.lb(s) for s in times]
                if all(r is BOT for r in lbs):
                    vals = [oracle.resolve(s) for s in times]
                    out.sigma.update(zip(others, vals))
                    if all(x == 1 for x in vals):
                        out.forced = True
                        return out
                else:
                    for u, r in zip(others, lbs):
                        if r is not BOT:
                            out.sigma[u] = 0
        return out

    def conditional_marginal(self, v, sigma) -> FiniteDistribution:
        """Law of ``v`` given ``sigma``, which must decide every edge at ``v``."""
        for idx in self.h.incident_edges(v):
            vals = [sigma.get(u) for u in self.h.edges[idx] if u != v]
            if any(x == 0 for x in vals):
                continue
            if all(x == 1 for x in vals):
                return FiniteDistribution.point(0)
            raise BoundaryContractError(f"edge {self.h.edges[idx]} undecided by boundary at vertex {v}")
        return FiniteDistribution([(0, HALF), (1, HALF)])

    def padding_dist(self, t, b: IndSetBoundary):
        v = self.clock.vertex_at(t)
        key = (v, b.forced, frozenset(b.sigma.items()))
        dist = self._padding_cache.get(key)
        if dist is None:
            dist = padding_from_marginal(self.conditional_marginal(v, b.sigma), LB_DIST)
            if b.forced and dist.outcomes != (0,):
                raise BoundaryContractError("forced boundary without a blocking edge")
            self._padding_cache[key] = dist
        return dist


def marginal_sampler_indset(h: Hypergraph, v: int, K: int, src: RandomSource, lazy: bool = True):
    """One run of the truncated marginal sampler: ``(value, truncated)``.

    Truncated runs report 0, the sampler's fallback value.
    """
    model = IndSetModel(h, lazy)
    out = approx_resolve(model.clock.pred(v, 0), K, src, model)
    if out is TRUNCATED:
        return 0, True
    return out, False


class IndSetMarginalProgram:
    """Enumerable program: outcome of the sampler with truncation kept distinct."""

    def __init__(self, h: Hypergraph, v: int, K: int, lazy: bool = True):
        self.h, self.v, self.K, self.lazy = h, v, K, lazy
        self._model = None

    def __getstate__(self):
        return {"h": self.h, "v": self.v, "K": self.K, "lazy": self.lazy, "_model": None}

    def __call__(self, src):
        if self._model is None:
            self._model = IndSetModel(self.h, self.lazy)
        tape = Tape()
        out = approx_resolve(self._model.clock.pred(self.v, 0), self.K, src, self._model, tape=tape)
        src.note_tape(tape)
        return out


def enumerate_indset_marginal(
    h: Hypergraph, v: int, K: int, budget: Optional[EnumerationBudget] = None, engine: str = "auto"
):
    """Same result as enumerating :class:`IndSetMarginalProgram` (lazy boundary), faster.

    ``engine`` is ``compiled`` (numba re-execution loop), ``python``
    (continuation-passing, shares work between sibling subtrees) or ``auto``
    (compiled when numba is importable).
    """
    budget = budget or EnumerationBudget()
    if engine not in ("auto", "compiled", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "compiled" or (engine == "auto" and _fastindset.AVAILABLE):
        return _enumerate_compiled(h, v, K, budget)
    return _enumerate_cps(h, v, K, budget)


def _from_tally(tally, budget, deadline):
    """Build the output law from leaf counts keyed by ``(outcome, depth)``."""
    acc = _Accumulator()
    for (out, depth), count in sorted(tally.items(), key=lambda x: (x[0][1], _order_key(x[0][0]))):
        p = Fraction(count, 2**depth)
        acc.leaves += count
        acc.depths[depth] += count
        acc.max_depth = max(acc.max_depth, depth)
        acc.max_lb = acc.max_depth
        if out is TRUNCATED:
            acc.truncation += p
        else:
            acc.probs[out] += p
    _check(acc, budget, deadline)
    return acc


def _enumerate_compiled(h, v, K, budget):
    if not _fastindset.AVAILABLE:
        raise RuntimeError("the compiled engine needs numba")
    deadline = time.monotonic() + budget.wall_clock if budget.wall_clock else None
    E = _fastindset.Enumerator(h, v, K)
    outcomes = (0, 1, TRUNCATED)
    chunk = 1 << 18
    while not E.done:
        E.step(min(chunk, budget.leaf_cap + 1 - E.leaves) if E.leaves <= budget.leaf_cap else chunk)
        if E.leaves > budget.leaf_cap or (deadline is not None and time.monotonic() > deadline):
            break
    tally = {
        (outcomes[o], d): int(E.tally[o, d]) for o in range(3) for d in range(K + 1) if E.tally[o, d]
    }
    return _from_tally(tally, budget, deadline).result()


def _enumerate_cps(h: Hypergraph, v: int, K: int, budget: EnumerationBudget):
    """Continuation-passing enumeration: at every fresh lower-bound draw both
    outcomes are explored in turn, each with its own copy of the tape, so work
    done before the draw is shared by the two subtrees.  All state that differs
    between branches is passed explicitly; closures capture nothing mutable.
    """
    model = IndSetModel(h, lazy=True)
    n = model.n
    others = model._others
    deadline = time.monotonic() + budget.wall_clock if budget.wall_clock else None
    # every branching draw has probability 1/2, so a leaf is summarised by
    # (outcome, depth) and its probability is 2**-depth
    tally = Counter()
    acc = _Accumulator()

    def leaf(out, st):
        tally[out, len(st[1])] += 1
        acc.leaves += 1
        if acc.leaves & 1023 == 0 or acc.leaves > budget.leaf_cap:
            _check(acc, budget, deadline)

    def lb(s, st, k):
        M, R = st
        if s in R:
            return k(R[s], st)
        if len(R) >= K:
            return leaf(TRUNCATED, st)
        R2 = dict(R)
        R2[s] = 0
        k(0, (dict(M), R2))
        R[s] = BOT
        k(BOT, st)

    def resolve(t, st, k):
        M = st[0]
        if t in M:
            return k(M[t], st)

        def after_lb(r, st):
            if r is not BOT:
                st[0][t] = r
                return k(r, st)

            def after_boundary(b, st):
                x = model.padding_dist(t, b).outcomes
                if len(x) != 1:
                    raise BoundaryContractError("non-degenerate independent-set padding")
                st[0][t] = x[0]
                return k(x[0], st)

            return boundary(t, st, after_boundary)

        return lb(t, st, after_lb)

    def boundary(t, st, k):
        edges = others[t % n + 1]

        def edge_loop(i, sigma, st):
            if i == len(edges):
                return k(IndSetBoundary(dict(sigma), False), st)
            oth = edges[i]
            times = [t - (t - u + 1) % n for u in oth]

            def scan(j, st):
                if j == len(oth):
                    return res_loop(0, sigma, st)

                def got(r, st):
                    if r is not BOT:
                        return edge_loop(i + 1, sigma + ((oth[j], 0),), st)
                    return scan(j + 1, st)

                return lb(times[j], st, got)

            def res_loop(j, sig, st):
                if j == len(oth):
                    return k(IndSetBoundary(dict(sig), True), st)

                def got(x, st):
                    sig2 = sig + ((oth[j], x),)
                    if x == 0:
                        return edge_loop(i + 1, sig2, st)
                    return res_loop(j + 1, sig2, st)

                return resolve(times[j], st, got)

            return scan(0, st)

        return edge_loop(0, (), st)

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20_000))
    try:
        resolve(model.clock.pred(v, 0), ({}, {}), leaf)
    finally:
        sys.setrecursionlimit(limit)
    return _from_tally(tally, budget, deadline).result()


def _enumerate_factor(args):
    sub, K, lazy, budget, engine = args
    if lazy:
        return enumerate_indset_marginal(sub, 1, K, budget, engine)
    return enumerate_distribution(IndSetMarginalProgram(sub, 1, K, lazy), budget)


def threshold_indset(max_degree: int, k: int, gamma) -> int:
    if max_degree < 2 or k < 2:
        raise ValueError("threshold needs max degree and k at least 2")
    return 3 * max_degree**2 * k**4 * ceil_log2_inv(gamma)


def threshold_indset_linear(max_degree: int, k: int, delta, gamma) -> int:
    if max_degree < 2 or k < 2:
        raise ValueError("threshold needs max degree and k at least 2")
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    value = 10**4 * ((1 + delta) / delta) ** 2 * max_degree**3 * k**9 * ceil_log2_inv(gamma)
    return -((-value.numerator) // value.denominator)


def indset_K_for_eps(h: Hypergraph, eps, linear: bool = False, delta=1) -> int:
    """Theory threshold with gamma = eps / (20 n); degree and k clamped to at least 2."""
    gamma = Fraction(eps) / (20 * max(h.n, 1))
    d = max(h.max_degree, 2)
    k = max(h.uniformity or 2, 2)
    if linear:
        return threshold_indset_linear(d, k, delta, gamma)
    return threshold_indset(d, k, gamma)


def count_indsets(
    h: Hypergraph,
    K: Optional[int] = None,
    eps=None,
    linear: bool = False,
    lazy: bool = True,
    budget: Optional[EnumerationBudget] = None,
    jobs: int = 1,
    engine: str = "auto",
) -> CountResult:
    """Certified estimate of the number of independent sets via the vertex chain rule.

    Factor ``i`` is the probability that ``v_i`` is out of the set given
    ``v_1..v_{i-1}`` are out; pruning turns it into the marginal of vertex 1
    of a smaller instance.
    """
    if (K is None) == (eps is None):
        raise ValueError("give exactly one of K and eps")
    if K is None:
        K = indset_K_for_eps(h, eps, linear)
    tasks = [(prune_for_vertex_decomposition(h, i), K, lazy, budget, engine) for i in range(1, h.n + 1)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            dists = list(pool.map(_enumerate_factor, tasks))
    else:
        dists = [_enumerate_factor(task) for task in tasks]
    factors = []
    for i, dist in enumerate(dists, start=1):
        p_hat, tau, interval = certified_factor(dist, lambda x: x == 0, fallback=0)
        factors.append(
            FactorReport(
                i, p_hat, tau, interval, dist.leaf_count, dist.max_draws_observed,
                dist.stats["max_lb_draws"], dist.stats["max_padding_draws"],
            )
        )
    return assemble_count(factors, K, "reciprocal", 1)
