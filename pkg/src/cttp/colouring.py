"""Hypergraph colourings through a projection onto a smaller alphabet.

Colours ``1..q`` are grouped into ``s`` balanced classes.  The chain runs on
class labels, whose marginals are close to uniform in the local-lemma regime;
colours are only recovered at the end by enumerating the small component that
the boundary search isolates.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Optional

from .core import (
    BOT,
    TRUNCATED,
    FiniteDistribution,
    ModelSpec,
    RandomSource,
    Resolver,
    Tape,
    Truncation,
    approx_resolve,
)
from .derandomise import (
    EnumerationBudget,
    Emit,
    FactorReport,
    assemble_count,
    certified_factor,
    ceil_log2_inv,
    enumerate_distribution,
)
from .model import Hypergraph, edge_prefix


class RegimeViolation(ArithmeticError):
    """The projected padding is not a distribution for these parameters."""


@dataclass(frozen=True)
class ProjectionScheme:
    q: int
    s: int
    class_of: tuple
    preimages: tuple

    def cls(self, colour: int) -> int:
        return self.class_of[colour - 1]

    def sizes(self) -> tuple:
        return tuple(len(p) for p in self.preimages)


def default_s(q: int, variant: str = "general") -> int:
    if variant == "general":
        s = round(q ** (2 / 3))
        while s**3 > q * q:
            s -= 1
        while (s + 1) ** 3 <= q * q:
            s += 1
        return max(s, 1)
    if variant == "linear":
        return max(math.isqrt(q), 1)
    raise ValueError(f"unknown variant {variant!r}")


def build_scheme(q: int, s: Optional[int] = None, variant: str = "general") -> ProjectionScheme:
    """Balanced map colours -> classes; larger classes first, ascending colour blocks."""
    if q < 1:
        raise ValueError("need at least one colour")
    if s is None:
        s = default_s(q, variant)
    if not 1 <= s <= q:
        raise ValueError(f"s={s} outside 1..{q}")
    base, extra = divmod(q, s)
    preimages = []
    c = 1
    for j in range(s):
        size = base + (1 if j < extra else 0)
        preimages.append(tuple(range(c, c + size)))
        c += size
    class_of = tuple(j + 1 for j, block in enumerate(preimages) for _ in block)
    return ProjectionScheme(q, s, class_of, tuple(preimages))


def lb_dist_projected(scheme: ProjectionScheme) -> FiniteDistribution:
    s, q = scheme.s, scheme.q
    shrink = 1 - Fraction(1, 4 * s)
    pairs = [(j + 1, Fraction(len(p), q) * shrink) for j, p in enumerate(scheme.preimages)]
    pairs.append((BOT, Fraction(1, 4 * s)))
    return FiniteDistribution(pairs)


def in_regime(q: int, s: int, max_degree: int, k: int) -> bool:
    """Local-uniformity condition ``floor(q/s)^k >= 4e q s Delta k``."""
    return (q // s) ** k >= 4 * math.e * q * s * max_degree * k


def choose_scheme(h: Hypergraph, q: int, s: Optional[int] = None, variant: str = "general") -> ProjectionScheme:
    """Scheme for ``h``: the requested ``s``, else the largest ``s`` up to the
    default that satisfies the local-uniformity condition, else ``s = 1``."""
    if s is not None:
        return build_scheme(q, s)
    k = h.uniformity or min((len(e) for e in h.edges), default=2)
    for cand in range(default_s(q, variant), 1, -1):
        if in_regime(q, cand, h.max_degree, k):
            return build_scheme(q, cand)
    return build_scheme(q, 1)


def satisfied(edge, sigma) -> bool:
    seen = None
    for u in edge:
        x = sigma.get(u)
        if x is None:
            continue
        if seen is None:
            seen = x
        elif x != seen:
            return True
    return False


def _proper_counts(h: Hypergraph, component, domains, targets) -> Counter:
    """Counts of proper colourings of ``h[component]`` by their restriction to ``targets``."""
    comp = sorted(component)
    pos = {u: i for i, u in enumerate(comp)}
    inside = [tuple(pos[u] for u in e) for e in h.edges if all(u in pos for u in e)]
    tpos = [pos[u] for u in targets]
    counts: Counter = Counter()
    for x in product(*(domains[u] for u in comp)):
        for e in inside:
            c = x[e[0]]
            if all(x[i] == c for i in e[1:]):
                break
        else:
            counts[tuple(x[i] for i in tpos)] += 1
    return counts


def conditional_set_marginal(h: Hypergraph, scheme: ProjectionScheme, component, sigma, targets) -> FiniteDistribution:
    """Law of the colours on ``targets`` given classes ``sigma`` on ``component``."""
    domains = {u: scheme.preimages[sigma[u] - 1] for u in component}
    counts = _proper_counts(h, component, domains, targets)
    total = sum(counts.values())
    if total == 0:
        raise RegimeViolation(f"no proper colouring of component {sorted(component)} under {sigma}")
    return FiniteDistribution(sorted((a, Fraction(c, total)) for a, c in counts.items()))


def padding_dist_colouring(h: Hypergraph, scheme: ProjectionScheme, component, sigma, v) -> FiniteDistribution:
    """Projected padding law of ``v`` from the exact colour marginal on ``h[component]``."""
    domains = {u: scheme.preimages[sigma[u] - 1] for u in component if u != v}
    domains[v] = tuple(range(1, scheme.q + 1))
    counts = _proper_counts(h, component, domains, (v,))
    total = sum(counts.values())
    if total == 0:
        raise RegimeViolation(f"no proper colouring of component {sorted(component)} given {sigma}")
    s, q = scheme.s, scheme.q
    pairs = []
    for j, block in enumerate(scheme.preimages, start=1):
        mass = Fraction(sum(counts[(c,)] for c in block), total)
        rho = Fraction(len(block), q) * (1 - Fraction(1, 4 * s))
        p = 4 * s * (mass - rho)
        if p < 0:
            raise RegimeViolation(
                f"padding mass {p} < 0 for class {j} at vertex {v} (q={q}, s={s}); "
                "the local-uniformity condition fails for this instance"
            )
        pairs.append((j, p))
    return FiniteDistribution(pairs)


@dataclass
class ColouringBoundary:
    component: frozenset
    sigma: dict


def grow_component(h, scheme, component, sigma, exclude, time_of, oracle, lazy=True):
    """Boundary search shared by the single-vertex and set samplers.

    Repeatedly takes the lowest-index edge that crosses ``component`` and is
    not satisfied by ``sigma``.  If its lower-bound values (ignoring
    ``exclude``) leave a single class possible, every such vertex is resolved
    and the edge is absorbed; otherwise the observed lower-bound values are
    pinned, which satisfies the edge.
    """
    while True:
        edge = None
        for e in h.edges:
            inside = sum(1 for u in e if u in component)
            if 0 < inside < len(e) and not satisfied(e, sigma):
                edge = e
                break
        if edge is None:
            return
        members = [u for u in edge if u not in exclude]
        seen = {}
        single = True
        cls = None
        for u in members:
            r = oracle.lb(time_of(u))
            if r is BOT:
                continue
            seen[u] = r
            if cls is None:
                cls = r
            elif r != cls:
                single = False
                if lazy:
                    break
        if single:
            for u in members:
                sigma[u] = oracle.resolve(time_of(u))
            component.update(edge)
        else:
            sigma.update(seen)


class ColouringModel(ModelSpec):
    """Projected colouring chain; spins are class labels ``1..s``."""

    def __init__(self, h: Hypergraph, scheme: ProjectionScheme, lazy: bool = True):
        self.h = h
        self.scheme = scheme
        self.lazy = lazy
        self._lb = lb_dist_projected(scheme)
        self._padding_cache = {}
        super().__init__(h.n)

    def lower_bound_dist(self):
        return self._lb

    def boundary(self, t, oracle):
        v = self.clock.vertex_at(t)
        component = {v}
        sigma = {}
        grow_component(
            self.h, self.scheme, component, sigma, {v},
            lambda u: self.clock.pred(u, t), oracle, self.lazy,
        )
        return ColouringBoundary(frozenset(component), sigma)

    def padding_dist(self, t, b: ColouringBoundary):
        v = self.clock.vertex_at(t)
        pinned = tuple(sorted((u, b.sigma[u]) for u in b.component if u != v))
        key = (v, b.component, pinned)
        dist = self._padding_cache.get(key)
        if dist is None:
            dist = padding_dist_colouring(self.h, self.scheme, b.component, b.sigma, v)
            self._padding_cache[key] = dist
        return dist


class SetSamplerProgram:
    """Set sampler for the colours on ``S``.

    Returns :class:`Emit` of the final conditional law when ``emit`` is set
    (counting mode), otherwise draws the assignment.  Truncation is reported
    as TRUNCATED; :func:`marginal_set_sampler` maps it to the all-one
    assignment.
    """

    def __init__(self, h: Hypergraph, scheme: ProjectionScheme, S, K: int, emit: bool = True, lazy: bool = True):
        self.h, self.scheme, self.S, self.K = h, scheme, tuple(S), K
        self.emit, self.lazy = emit, lazy
        self._model = None
        self._final_cache = {}
        self.largest_component = 0

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_model"] = None
        state["_final_cache"] = {}
        return state

    def __call__(self, src: RandomSource):
        if self._model is None:
            self._model = ColouringModel(self.h, self.scheme, self.lazy)
        model = self._model
        tape = Tape(budget=self.K)
        oracle = Resolver(model, tape, src)
        time_of = lambda u: model.clock.pred(u, 0)  # noqa: E731
        try:
            sigma = {u: oracle.resolve(time_of(u)) for u in self.S}
            component = set(self.S)
            grow_component(self.h, self.scheme, component, sigma, (), time_of, oracle, self.lazy)
        except Truncation:
            src.note_tape(tape)
            return TRUNCATED
        src.note_tape(tape)
        self.largest_component = max(self.largest_component, len(component))
        src.note_max("largest_component", len(component))
        comp = frozenset(component)
        key = (comp, tuple(sorted((u, sigma[u]) for u in comp)))
        dist = self._final_cache.get(key)
        if dist is None:
            dist = conditional_set_marginal(self.h, self.scheme, comp, sigma, self.S)
            self._final_cache[key] = dist
        if self.emit:
            return Emit(dist)
        return src.draw(dist, key=("final", 0))


class ProjectedMarginalProgram:
    """Single-vertex projected sampler with truncation kept distinct."""

    def __init__(self, h: Hypergraph, scheme: ProjectionScheme, v: int, K: int, lazy: bool = True):
        self.h, self.scheme, self.v, self.K, self.lazy = h, scheme, v, K, lazy
        self._model = None

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_model"] = None
        return state

    def __call__(self, src):
        if self._model is None:
            self._model = ColouringModel(self.h, self.scheme, self.lazy)
        tape = Tape()
        out = approx_resolve(self._model.clock.pred(self.v, 0), self.K, src, self._model, tape=tape)
        src.note_tape(tape)
        return out


def marginal_set_sampler(h: Hypergraph, scheme: ProjectionScheme, S, K: int, src: RandomSource, lazy: bool = True):
    """One run of the set sampler: ``(assignment, truncated)``."""
    out = SetSamplerProgram(h, scheme, S, K, emit=False, lazy=lazy)(src)
    if out is TRUNCATED:
        return (1,) * len(tuple(S)), True
    return out, False


def threshold_colouring(max_degree: int, k: int, gamma) -> int:
    if max_degree < 2 or k < 2:
        raise ValueError("threshold needs max degree and k at least 2")
    return 4 * max_degree**2 * k**5 * ceil_log2_inv(gamma)


def threshold_colouring_linear(max_degree: int, k: int, delta, gamma) -> int:
    if max_degree < 2 or k < 2:
        raise ValueError("threshold needs max degree and k at least 2")
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    value = 3 * 10**4 * ((1 + delta) / delta) ** 2 * max_degree**3 * k**10 * ceil_log2_inv(gamma)
    return -((-value.numerator) // value.denominator)


def colouring_K_for_eps(h: Hypergraph, eps, linear: bool = False, delta=1) -> int:
    """Theory threshold with gamma = eps / (20 m); degree and k clamped to at least 2."""
    gamma = Fraction(eps) / (20 * max(h.m, 1))
    d = max(h.max_degree, 2)
    k = max(h.uniformity or 2, 2)
    if linear:
        return threshold_colouring_linear(d, k, delta, gamma)
    return threshold_colouring(d, k, gamma)


def not_monochromatic(assignment) -> bool:
    return len(set(assignment)) > 1


def count_colourings(
    h: Hypergraph,
    q: int,
    K: Optional[int] = None,
    eps=None,
    s: Optional[int] = None,
    variant: str = "general",
    lazy: bool = True,
    budget: Optional[EnumerationBudget] = None,
    jobs: int = 1,
):
    """Certified estimate of the number of proper ``q``-colourings via the edge chain rule."""
    if (K is None) == (eps is None):
        raise ValueError("give exactly one of K and eps")
    if K is None:
        K = colouring_K_for_eps(h, eps, variant == "linear")
    scheme = choose_scheme(h, q, s, variant)
    factors = []
    for i, edge in enumerate(h.edges, start=1):
        program = SetSamplerProgram(edge_prefix(h, i - 1), scheme, edge, K, emit=True, lazy=lazy)
        dist = enumerate_distribution(program, budget, jobs=jobs)
        p_hat, tau, interval = certified_factor(dist, not_monochromatic, fallback=(1,) * len(edge))
        factors.append(
            FactorReport(
                i, p_hat, tau, interval, dist.leaf_count, dist.max_draws_observed,
                dist.stats["max_lb_draws"], dist.stats["max_padding_draws"],
                extra={"s": scheme.s, "largest_component": dist.stats.get("largest_component", 0)},
            )
        )
    result = assemble_count(factors, K, "identity", Fraction(q) ** h.n)
    result.scheme = scheme
    return result
