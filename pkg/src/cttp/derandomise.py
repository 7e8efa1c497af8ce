"""Exhaustive enumeration of a sampler's random choices.

A *program* is any callable taking a :class:`~cttp.core.RandomSource` and
returning an outcome, :data:`~cttp.core.TRUNCATED`, or an :class:`Emit`
wrapping a terminal distribution.  The enumerator re-runs it once per leaf of
its decision tree: the run replays a recorded prefix, then follows the first
outcome of each fresh draw while queueing the other outcomes for later runs.
"""

from __future__ import annotations

import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .core import (
    TRUNCATED,
    DrawLimitExceeded,
    FiniteDistribution,
    RandomSource,
    Symbol,
    _order_key,
)

DEFAULT_LEAF_CAP = 2_000_000
LEAF_CAP_ENV = "CTTP_LEAF_CAP"


def default_leaf_cap() -> int:
    raw = os.environ.get(LEAF_CAP_ENV)
    return int(raw) if raw else DEFAULT_LEAF_CAP


@dataclass(frozen=True)
class Emit:
    """Terminal node: integrate ``dist`` instead of branching on it."""

    dist: FiniteDistribution


@dataclass
class EnumerationBudget:
    max_draws: Optional[int] = None
    leaf_cap: int = field(default_factory=default_leaf_cap)
    wall_clock: Optional[float] = None


class EnumerationOverflow(RuntimeError):
    def __init__(self, message: str, stats: dict):
        super().__init__(message)
        self.stats = stats


class Uncertifiable(ArithmeticError):
    pass


class EnumerationSource(RandomSource):
    """Replays a prefix, then takes the first outcome of every fresh draw.

    The untaken outcomes of each fresh draw are queued in ``siblings`` as
    ``(prefix, probability)`` pairs, so one run yields one leaf.
    """

    def __init__(self, prefix, p, limit):
        self.prefix = prefix
        self.pos = 0
        self.p = p
        self.limit = limit
        self.taken: list = []
        self.siblings: list = []
        self.lb_draws = 0
        self.padding_draws = 0
        self.maxima: dict = {}

    def _draw(self, dist, key):
        pos = self.pos
        if pos < len(self.prefix):
            self.pos = pos + 1
            return self.prefix[pos]
        if self.limit is not None and pos >= self.limit:
            raise DrawLimitExceeded(pos)
        items = dist.items()
        base = self.prefix + tuple(self.taken)
        for o, q in items[1:]:
            self.siblings.append((base + (o,), self.p * q))
        first, q = items[0]
        self.p *= q
        self.taken.append(first)
        self.pos = pos + 1
        return first

    def note_tape(self, tape):
        self.lb_draws = max(self.lb_draws, len(tape.R))
        self.padding_draws = max(self.padding_draws, tape.padding_draws)

    def note_max(self, name, value):
        self.maxima[name] = max(self.maxima.get(name, value), value)


@dataclass
class OutputDistribution:
    probs: dict
    truncation_mass: Fraction
    leaf_count: int
    max_draws_observed: int
    depth_histogram: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def prob(self, outcome) -> Fraction:
        return self.probs.get(outcome, Fraction(0))

    def mass(self, event: Callable) -> Fraction:
        return sum((p for o, p in self.probs.items() if event(o)), Fraction(0))

    def total(self) -> Fraction:
        return sum(self.probs.values(), Fraction(0)) + self.truncation_mass

    def merged(self, fallback) -> dict:
        """Outcome law with the truncation mass moved onto ``fallback``."""
        out = dict(self.probs)
        if self.truncation_mass:
            out[fallback] = out.get(fallback, Fraction(0)) + self.truncation_mass
        return out

    def to_json_dict(self) -> dict:
        return {
            "outcomes": [
                [outcome_json(o), rational_json(p)]
                for o, p in sorted(self.probs.items(), key=lambda x: _order_key(x[0]))
            ],
            "truncation_mass": rational_json(self.truncation_mass),
            "leaf_count": self.leaf_count,
            "max_draws_observed": self.max_draws_observed,
            "depth_histogram": {str(d): c for d, c in sorted(self.depth_histogram.items())},
            "max_lb_draws": self.stats.get("max_lb_draws", 0),
            "max_padding_draws": self.stats.get("max_padding_draws", 0),
        }


def outcome_json(o):
    if isinstance(o, Symbol):
        return o.value
    if isinstance(o, tuple):
        return [outcome_json(x) for x in o]
    return o


def rational_json(x) -> dict:
    x = Fraction(x)
    return {"rational": f"{x.numerator}/{x.denominator}", "decimal": float(x)}


def parse_rational_json(d) -> Fraction:
    return Fraction(d["rational"])


class _Accumulator:
    def __init__(self):
        self.probs = defaultdict(Fraction)
        self.truncation = Fraction(0)
        self.leaves = 0
        self.max_depth = 0
        self.depths = defaultdict(int)
        self.max_lb = 0
        self.max_pad = 0
        self.maxima: dict = {}
        self.pending = 0

    def _maxima(self, other: dict):
        for k, x in other.items():
            self.maxima[k] = max(self.maxima.get(k, x), x)

    def add(self, out, p, depth, src):
        self.leaves += 1
        self.depths[depth] += 1
        if depth > self.max_depth:
            self.max_depth = depth
        self.max_lb = max(self.max_lb, src.lb_draws)
        self.max_pad = max(self.max_pad, src.padding_draws)
        if src.maxima:
            self._maxima(src.maxima)
        if out is TRUNCATED:
            self.truncation += p
        elif isinstance(out, Emit):
            for o, q in out.dist:
                self.probs[o] += p * q
        else:
            self.probs[out] += p

    def merge(self, other: "_Accumulator"):
        for o, p in other.probs.items():
            self.probs[o] += p
        self.truncation += other.truncation
        self.leaves += other.leaves
        self.max_depth = max(self.max_depth, other.max_depth)
        for d, c in other.depths.items():
            self.depths[d] += c
        self.max_lb = max(self.max_lb, other.max_lb)
        self.max_pad = max(self.max_pad, other.max_pad)
        self._maxima(other.maxima)

    def partial_stats(self) -> dict:
        explored = sum(self.probs.values(), Fraction(0)) + self.truncation
        return {
            "leaf_count": self.leaves,
            "max_draws_observed": self.max_depth,
            "explored_mass": float(explored),
            "pending_nodes": self.pending,
        }

    def result(self) -> OutputDistribution:
        return OutputDistribution(
            probs={o: p for o, p in self.probs.items() if p},
            truncation_mass=self.truncation,
            leaf_count=self.leaves,
            max_draws_observed=self.max_depth,
            depth_histogram=dict(self.depths),
            stats={"max_lb_draws": self.max_lb, "max_padding_draws": self.max_pad, **dict(sorted(self.maxima.items()))},
        )


def _step(program, prefix, p, budget, acc):
    """Run one leaf; return the queued sibling subtrees in outcome order."""
    src = EnumerationSource(prefix, p, budget.max_draws)
    try:
        out = program(src)
    except DrawLimitExceeded:
        out = TRUNCATED
    acc.add(out, src.p, src.pos, src)
    return src.siblings


def _check(acc, budget, deadline):
    if acc.leaves > budget.leaf_cap:
        raise EnumerationOverflow(f"leaf cap {budget.leaf_cap} exceeded", acc.partial_stats())
    if deadline is not None and time.monotonic() > deadline:
        raise EnumerationOverflow(f"wall-clock cap {budget.wall_clock}s exceeded", acc.partial_stats())


def _explore(program, roots, budget, deadline) -> _Accumulator:
    acc = _Accumulator()
    stack = list(reversed(roots))
    while stack:
        prefix, p = stack.pop()
        stack.extend(reversed(_step(program, prefix, p, budget, acc)))
        if acc.leaves & 255 == 0 or acc.leaves > budget.leaf_cap:
            acc.pending = len(stack)
            _check(acc, budget, deadline)
    acc.pending = 0
    _check(acc, budget, deadline)
    return acc


def _explore_task(args):
    program, roots, budget, deadline = args
    return _explore(program, roots, budget, deadline)


def enumerate_distribution(program, budget: Optional[EnumerationBudget] = None, jobs: int = 1) -> OutputDistribution:
    """Exact output law of ``program`` over all of its random choices.

    With ``jobs > 1`` the top of the tree is expanded breadth-first and the
    resulting subtrees are explored by worker processes; exact rational sums
    make the result independent of the worker count.
    """
    budget = budget or EnumerationBudget()
    deadline = time.monotonic() + budget.wall_clock if budget.wall_clock else None
    if jobs <= 1:
        return _explore(program, [((), Fraction(1))], budget, deadline).result()

    acc = _Accumulator()
    frontier = [((), Fraction(1))]
    target = 4 * jobs
    while frontier and len(frontier) < target:
        nxt = []
        for prefix, p in frontier:
            nxt.extend(_step(program, prefix, p, budget, acc))
        _check(acc, budget, deadline)
        frontier = nxt
    if frontier:
        chunks = [frontier[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_explore_task, [(program, c, budget, deadline) for c in chunks if c]))
        for part in parts:
            acc.merge(part)
        _check(acc, budget, deadline)
    return acc.result()


def certified_factor(dist: OutputDistribution, event: Callable, fallback=None):
    """``(p_hat, tau, (lo, hi))`` for the probability of ``event``.

    ``p_hat`` counts untruncated mass, plus the truncation mass when the
    sampler's ``fallback`` output satisfies the event.
    """
    tau = dist.truncation_mass
    p_hat = dist.mass(event)
    if fallback is not None and event(fallback):
        p_hat += tau
    lo = max(Fraction(0), p_hat - tau)
    hi = min(Fraction(1), p_hat + tau)
    return p_hat, tau, (lo, hi)


@dataclass
class ProductResult:
    estimate: Optional[Fraction]
    lower: Fraction
    upper: Fraction


def certified_product(factors, transform: str = "identity", scale=1) -> ProductResult:
    """Interval product over factors given as ``(lo, hi)`` or ``(estimate, lo, hi)``.

    ``reciprocal`` multiplies ``1/x``; it raises :class:`Uncertifiable` when
    some lower end is not positive.  Estimate is ``None`` if a reciprocal
    point estimate is zero.
    """
    if transform not in ("identity", "reciprocal"):
        raise ValueError(f"unknown transform {transform!r}")
    scale = Fraction(scale)
    est, lo, hi = scale, scale, scale
    for f in factors:
        if len(f) == 2:
            a, b = Fraction(f[0]), Fraction(f[1])
            x = (a + b) / 2
        else:
            x, a, b = (Fraction(y) for y in f)
        if a > b:
            raise ValueError(f"empty interval {f}")
        if transform == "identity":
            est = est * x if est is not None else None
            lo, hi = lo * a, hi * b
        else:
            if a <= 0:
                raise Uncertifiable(f"factor interval {f} reaches zero")
            est = est / x if est is not None and x > 0 else None
            lo, hi = lo / b, hi / a
    return ProductResult(est, lo, hi)


def ceil_log2_inv(gamma) -> int:
    """Exact ``ceil(log2(1/gamma))`` for ``0 < gamma < 1``."""
    g = Fraction(gamma)
    if not 0 < g < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    eta = 0
    while g * 2**eta < 1:
        eta += 1
    return eta


def maybe_rational(x):
    return None if x is None else rational_json(x)


@dataclass
class FactorReport:
    index: int
    estimate: Fraction
    truncation: Fraction
    interval: tuple
    leaf_count: int
    max_draws: int
    max_lb_draws: int = 0
    max_padding_draws: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "index": self.index,
            "estimate": maybe_rational(self.estimate),
            "truncation_mass": rational_json(self.truncation),
            "interval": [rational_json(x) for x in self.interval],
            "leaf_count": self.leaf_count,
            "max_draws": self.max_draws,
            "max_lb_draws": self.max_lb_draws,
            "max_padding_draws": self.max_padding_draws,
        }
        out.update(self.extra)
        return out


@dataclass
class CountResult:
    estimate: Fraction
    lower: Optional[Fraction]
    upper: Optional[Fraction]
    certified: bool
    K: int
    factors: list

    def contains(self, z) -> bool:
        if not self.certified:
            return False
        return self.lower <= z <= self.upper

    def to_dict(self) -> dict:
        return {
            "estimate": maybe_rational(self.estimate),
            "interval": None
            if not self.certified
            else [rational_json(self.lower), rational_json(self.upper)],
            "certified": self.certified,
            "K": self.K,
            "factors": [f.to_dict() for f in self.factors],
        }


def assemble_count(factors, K, transform, scale) -> CountResult:
    triples = [(f.estimate, *f.interval) for f in factors]
    estimate = certified_product([(f.estimate, f.estimate, f.estimate) for f in factors], transform, scale).estimate
    try:
        res = certified_product(triples, transform, scale)
    except Uncertifiable:
        return CountResult(estimate, None, None, False, K, factors)
    return CountResult(estimate, res.lower, res.upper, True, K, factors)
