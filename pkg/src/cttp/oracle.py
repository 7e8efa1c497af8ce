"""Brute-force ground truth: exact counts and marginals, the forward chain, Monte Carlo."""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Callable, Optional

import numpy as np

from .colouring import ColouringModel, ProjectionScheme
from .core import BOT, FiniteDistribution, RandomSource, RngSource, padding_from_marginal
from .indset import IndSetModel
from .model import Hypergraph, edge_prefix, prune_for_vertex_decomposition

INDSET_BUDGET = 2**24
COLOURING_BUDGET = 10**7
CHUNK = 1 << 18


class OracleBudgetExceeded(RuntimeError):
    pass


class InfeasiblePinning(ValueError):
    """The pinning has no extension to a feasible configuration."""


def _configurations(h: Hypergraph, q: int, budget: int):
    """Yield chunks (rows x n arrays, values 0..q-1) of all configurations."""
    n = h.n
    total = q**n
    if total > budget:
        raise OracleBudgetExceeded(f"{q}^{n} = {total} configurations exceeds budget {budget}")
    powers = np.array([q**i for i in range(n)], dtype=np.int64)
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(total, start + CHUNK), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % q


def _feasible_mask(h: Hypergraph, cfg: np.ndarray, kind: str) -> np.ndarray:
    ok = np.ones(len(cfg), dtype=bool)
    for e in h.edges:
        cols = cfg[:, [u - 1 for u in e]]
        if kind == "indset":
            ok &= ~np.all(cols == 1, axis=1)
        else:
            ok &= ~np.all(cols == cols[:, :1], axis=1)
    return ok


def feasible_configurations(h: Hypergraph, kind: str, q: Optional[int] = None, budget: Optional[int] = None) -> np.ndarray:
    """All independent sets (0/1 rows) or proper colourings (colours 1..q) of ``h``."""
    if kind == "indset":
        base, shift, budget = 2, 0, budget or INDSET_BUDGET
    elif kind == "colouring":
        if q is None:
            raise ValueError("colouring needs q")
        base, shift, budget = q, 1, budget or COLOURING_BUDGET
    else:
        raise ValueError(f"unknown kind {kind!r}")
    parts = [cfg[_feasible_mask(h, cfg, kind)] for cfg in _configurations(h, base, budget)]
    rows = np.concatenate(parts) if parts else np.zeros((1, 0), dtype=np.int64)
    return rows + shift


def exact_count_indsets(h: Hypergraph, budget: int = INDSET_BUDGET) -> int:
    return sum(int(_feasible_mask(h, cfg, "indset").sum()) for cfg in _configurations(h, 2, budget))


def exact_count_colourings(h: Hypergraph, q: int, budget: int = COLOURING_BUDGET) -> int:
    return sum(int(_feasible_mask(h, cfg, "colouring").sum()) for cfg in _configurations(h, q, budget))


def _filter(rows: np.ndarray, pinning, lift=None) -> np.ndarray:
    keep = np.ones(len(rows), dtype=bool)
    for u, x in (pinning or {}).items():
        col = rows[:, u - 1] if lift is None else lift[rows[:, u - 1]]
        keep &= col == x
    return rows[keep]


def _law(values: np.ndarray) -> FiniteDistribution:
    if len(values) == 0:
        raise InfeasiblePinning("pinning has zero conditional mass")
    keys, counts = np.unique(values, axis=0, return_counts=True)
    total = int(counts.sum())
    pairs = []
    for key, c in zip(keys, counts):
        k = tuple(int(x) for x in np.atleast_1d(key))
        pairs.append((k if len(k) > 1 or values.ndim > 1 else k[0], Fraction(int(c), total)))
    return FiniteDistribution(pairs)


def exact_marginal(
    h: Hypergraph,
    kind: str,
    v: int,
    pinning=None,
    q: Optional[int] = None,
    scheme: Optional[ProjectionScheme] = None,
) -> FiniteDistribution:
    """Conditional law of ``v`` given ``pinning``.

    ``kind`` is ``indset``, ``colouring`` or ``projected``; for ``projected``
    both the pinning and the result are in class labels of ``scheme``.
    """
    if kind == "projected":
        if scheme is None:
            raise ValueError("projected marginal needs a scheme")
        rows = feasible_configurations(h, "colouring", scheme.q)
        lift = np.array((0,) + scheme.class_of)
        rows = _filter(rows, pinning, lift)
        return _law(lift[rows[:, v - 1]])
    rows = _filter(feasible_configurations(h, kind, q), pinning)
    return _law(rows[:, v - 1])


def exact_set_marginal(h: Hypergraph, q: int, S, pinning=None) -> FiniteDistribution:
    """Law of the colours on ``S`` (as a tuple in the order of ``S``)."""
    rows = _filter(feasible_configurations(h, "colouring", q), pinning)
    return _law(rows[:, [u - 1 for u in S]].reshape(len(rows), len(S)))


def exact_vertex_factors(h: Hypergraph) -> list:
    """``Pr[v_i = 0 | v_1..v_{i-1} = 0]`` under the uniform independent set, i = 1..n."""
    out = []
    for i in range(1, h.n + 1):
        pin = {u: 0 for u in range(1, i)}
        out.append(exact_marginal(h, "indset", i, pin).prob(0))
    return out


def exact_pruned_factors(h: Hypergraph) -> list:
    """Same factors computed on the pruned instances (vertex 1 of each)."""
    return [exact_marginal(prune_for_vertex_decomposition(h, i), "indset", 1).prob(0) for i in range(1, h.n + 1)]


def exact_edge_factors(h: Hypergraph, q: int) -> list:
    """``Pr[e_i not monochromatic]`` under uniform proper colourings of the first i-1 edges."""
    out = []
    for i, e in enumerate(h.edges, start=1):
        law = exact_set_marginal(edge_prefix(h, i - 1), q, e)
        out.append(sum((p for a, p in law if len(set(a)) > 1), Fraction(0)))
    return out


def projected_conditional(h: Hypergraph, scheme: ProjectionScheme, v: int, classes) -> FiniteDistribution:
    """Exact law of ``v``'s class given the classes of every other vertex."""
    return _projected_conditional(h, scheme, v, tuple(sorted(classes.items())))


@lru_cache(maxsize=200_000)
def _projected_conditional(h, scheme, v, pinned):
    pin = dict(pinned)
    domains = [
        tuple(range(1, scheme.q + 1)) if u == v else scheme.preimages[pin[u] - 1] for u in h.vertices
    ]
    counts = Counter()
    for x in product(*domains):
        if all(len({x[u - 1] for u in e}) > 1 for e in h.edges):
            counts[scheme.cls(x[v - 1])] += 1
    total = sum(counts.values())
    if total == 0:
        raise InfeasiblePinning(f"no proper colouring with classes {pin}")
    return FiniteDistribution(sorted((j, Fraction(c, total)) for j, c in counts.items()))


def list_colouring_count(h: Hypergraph, lists: dict) -> int:
    """Proper colourings with ``u`` coloured from ``lists[u]``, by inclusion-exclusion over edge sets.

    Each subset F of edges forced monochromatic contributes the product, over
    the connected pieces of F, of the colours common to every list in the piece.
    Cost is ``2^m`` set operations, independent of the number of colours.
    """
    sets = {u: frozenset(lists[u]) for u in h.vertices}
    m = h.m
    total = 0
    for mask in range(1 << m):
        parent = {u: u for u in h.vertices}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i in range(m):
            if mask >> i & 1:
                e = h.edges[i]
                for u in e[1:]:
                    a, b = find(e[0]), find(u)
                    if a != b:
                        parent[b] = a
        common = {}
        for u in h.vertices:
            r = find(u)
            common[r] = common[r] & sets[u] if r in common else sets[u]
        term = 1
        for c in common.values():
            term *= len(c)
            if not term:
                break
        total += -term if bin(mask).count("1") % 2 else term
    return total


def projected_conditional_ie(h: Hypergraph, scheme: ProjectionScheme, v: int, classes) -> FiniteDistribution:
    """:func:`projected_conditional` computed with :func:`list_colouring_count`."""
    lists = {u: scheme.preimages[classes[u] - 1] for u in h.vertices if u != v}
    counts = []
    for j, block in enumerate(scheme.preimages, start=1):
        lists[v] = block
        counts.append((j, list_colouring_count(h, lists)))
    total = sum(c for _, c in counts)
    if total == 0:
        raise InfeasiblePinning(f"no proper colouring with classes {classes}")
    return FiniteDistribution([(j, Fraction(c, total)) for j, c in counts if c])


def full_conditional(model, v: int, config: dict) -> FiniteDistribution:
    """Law of ``v`` given every other vertex, by direct enumeration."""
    if isinstance(model, IndSetModel):
        feasible = []
        for x in (0, 1):
            trial = dict(config)
            trial[v] = x
            if all(any(trial[u] == 0 for u in e) for e in model.h.edges if v in e):
                feasible.append(x)
        return FiniteDistribution.uniform(feasible)
    if isinstance(model, ColouringModel):
        others = {u: x for u, x in config.items() if u != v}
        return projected_conditional(model.h, model.scheme, v, others)
    raise TypeError(f"no brute-force conditional for {type(model).__name__}")


def random_feasible_configuration(model, rng: random.Random) -> dict:
    if isinstance(model, IndSetModel):
        rows = feasible_configurations(model.h, "indset")
        row = rows[rng.randrange(len(rows))]
        return {u: int(row[u - 1]) for u in model.h.vertices}
    if isinstance(model, ColouringModel):
        rows = feasible_configurations(model.h, "colouring", model.scheme.q)
        row = rows[rng.randrange(len(rows))]
        return {u: model.scheme.cls(int(row[u - 1])) for u in model.h.vertices}
    raise TypeError(f"no feasible-configuration sampler for {type(model).__name__}")


@dataclass
class Trajectory:
    """One run of the forward chain from time ``-T`` to 0."""

    T: int
    n: int
    initial: dict
    r: dict = field(default_factory=dict)
    U: dict = field(default_factory=dict)
    updates: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)
    padding_used: int = 0

    def value_at(self, t: int):
        """``X_t(v_{i(t)})``; times at or before ``-T`` read the initial state."""
        if t <= -self.T:
            return self.initial[t % self.n + 1]
        return self.updates[t]


def forward_chain_simulate(model, T: int, seed: int, initial: Optional[dict] = None) -> Trajectory:
    """Systematic-scan chain over times ``-T+1..0`` with recorded randomness.

    Each step draws ``r_t`` from the lower-bound law and a uniform ``U_t``;
    when ``r_t`` is BOT the new value is the ``U_t`` quantile of the padding
    law computed from the full current configuration.
    """
    rng = random.Random(seed)
    if initial is None:
        initial = random_feasible_configuration(model, rng)
    src = RngSource(rng)
    lb = model.lower_bound_dist()
    X = dict(initial)
    traj = Trajectory(T, model.n, dict(initial))
    for t in range(-T + 1, 1):
        v = model.clock.vertex_at(t)
        r = src.draw(lb)
        u = Fraction(rng.getrandbits(53), 2**53)
        traj.r[t], traj.U[t] = r, u
        if r is BOT:
            pad = padding_from_marginal(full_conditional(model, v, X), lb)
            X[v] = pad.inverse_cdf(u)
            traj.padding_used += 1
        else:
            X[v] = r
        traj.updates[t] = X[v]
    traj.final = X
    return traj


class CoupledSource(RandomSource):
    """Feeds a backward run the randomness recorded by :func:`forward_chain_simulate`."""

    def __init__(self, traj: Trajectory):
        self.traj = traj

    def _draw(self, dist, key):
        kind, t = key
        if kind == "lb":
            r = self.traj.r[t]
            if dist.prob(r) == 0:
                raise ValueError(f"recorded r_{t}={r!r} impossible under {dist!r}")
            return r
        if kind == "pad":
            return dist.inverse_cdf(self.traj.U[t])
        raise KeyError(key)


@dataclass
class EmpiricalDistribution:
    counts: dict
    trials: int
    seed: Optional[int] = None

    def freq(self, outcome) -> float:
        return self.counts.get(outcome, 0) / self.trials

    def stderr(self, outcome, p: Optional[float] = None) -> float:
        p = self.freq(outcome) if p is None else float(p)
        return math.sqrt(p * (1 - p) / self.trials)

    def within(self, outcome, p, sigmas: float = 4.0) -> bool:
        """Empirical frequency within ``sigmas`` standard errors of ``p``."""
        return abs(self.freq(outcome) - float(p)) <= sigmas * self.stderr(outcome, p) + 1e-12


def monte_carlo_distribution(sampler: Callable[[RandomSource], object], trials: int, seed: int) -> EmpiricalDistribution:
    """Run ``sampler`` ``trials`` times on one Mersenne Twister stream seeded with ``seed``."""
    if trials < 1:
        raise ValueError("need at least one trial")
    src = RngSource(seed)
    counts = Counter(sampler(src) for _ in range(trials))
    return EmpiricalDistribution(dict(counts), trials, seed)
