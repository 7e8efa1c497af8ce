"""Generic coupling-towards-the-past engine.

The engine runs the backward deduction for a systematic-scan Glauber dynamics
whose model supplies three things: a lower-bound distribution, a boundary
routine and a padding distribution (see :class:`ModelSpec`).  All randomness
goes through a :class:`RandomSource`, which is what lets the same code run as a
Monte Carlo sampler, replay a recorded tape, or be enumerated exhaustively.
"""

from __future__ import annotations

import enum
import math
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Any, Hashable, Iterable, Iterator, Mapping, Optional


class Symbol(enum.Enum):
    BOT = "BOT"
    TRUNCATED = "TRUNCATED"

    def __repr__(self):
        return self.value


BOT = Symbol.BOT
TRUNCATED = Symbol.TRUNCATED

DEFAULT_STEP_GUARD = 1_000_000


class Truncation(Exception):
    """Raised when a lower-bound draw is attempted with the budget exhausted."""


class NonTermination(RuntimeError):
    """The step guard of an untruncated resolve was exceeded."""


class BoundaryContractError(RuntimeError):
    """A boundary result does not pin the target's conditional marginal."""


class FiniteDistribution:
    """Outcomes with probabilities, exact (:class:`Fraction`) by default.

    Zero-probability outcomes are dropped on construction.  With
    ``exact=False`` float probabilities are accepted and the unit-sum check is
    done to within 1e-9.
    """

    __slots__ = ("_items", "_index", "exact")

    def __init__(self, pairs: Iterable[tuple[Hashable, Real]] | Mapping, exact: bool = True):
        if isinstance(pairs, Mapping):
            pairs = pairs.items()
        items = []
        seen = set()
        total = Fraction(0) if exact else 0.0
        for outcome, p in pairs:
            if exact:
                if isinstance(p, float):
                    raise TypeError("float probability in an exact distribution")
                p = Fraction(p)
            if p < 0:
                raise ValueError(f"negative probability {p} for {outcome!r}")
            if outcome in seen:
                raise ValueError(f"duplicate outcome {outcome!r}")
            seen.add(outcome)
            total += p
            if p:
                items.append((outcome, p))
        if exact and total != 1:
            raise ValueError(f"probabilities sum to {total}, not 1")
        if not exact and abs(total - 1) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        self._items = tuple(items)
        self._index = dict(items)
        self.exact = exact

    @classmethod
    def point(cls, outcome) -> "FiniteDistribution":
        return cls([(outcome, 1)])

    @classmethod
    def uniform(cls, outcomes: Iterable[Hashable]) -> "FiniteDistribution":
        outcomes = list(outcomes)
        return cls([(o, Fraction(1, len(outcomes))) for o in outcomes])

    def items(self) -> tuple[tuple[Hashable, Any], ...]:
        return self._items

    @property
    def outcomes(self) -> tuple:
        return tuple(o for o, _ in self._items)

    def prob(self, outcome) -> Any:
        return self._index.get(outcome, 0)

    def is_point(self) -> bool:
        return len(self._items) == 1

    def __len__(self):
        return len(self._items)

    def __iter__(self) -> Iterator[tuple[Hashable, Any]]:
        return iter(self._items)

    def __eq__(self, other):
        if not isinstance(other, FiniteDistribution):
            return NotImplemented
        return self._index == other._index

    def __hash__(self):
        return hash(frozenset(self._index.items()))

    def __repr__(self):
        body = ", ".join(f"{o!r}: {p}" for o, p in self._items)
        return f"FiniteDistribution({{{body}}})"

    def inverse_cdf(self, u) -> Hashable:
        """Outcome selected by ``u`` in [0, 1) under the stored outcome order."""
        acc = 0
        for outcome, p in self._items:
            acc += p
            if u < acc:
                return outcome
        return self._items[-1][0]

    def sorted(self) -> "FiniteDistribution":
        """Same law with outcomes in a canonical order (by repr for mixed types)."""
        items = sorted(self._items, key=lambda x: _order_key(x[0]))
        out = FiniteDistribution.__new__(FiniteDistribution)
        out._items = tuple(items)
        out._index = dict(items)
        out.exact = self.exact
        return out


def _order_key(x):
    if isinstance(x, Symbol):
        return (1, x.value)
    return (0, x) if isinstance(x, (int, tuple)) else (2, repr(x))


def padding_from_marginal(marginal: FiniteDistribution, lower: FiniteDistribution) -> FiniteDistribution:
    """Padding law ``(mu(j) - b_j) / (1 - sum b)`` for a lower-bound distribution.

    ``lower`` puts mass ``b_j / 1`` on spin ``j`` and the rest on BOT, i.e. the
    lower bound distribution of the model.
    """
    bot = lower.prob(BOT)
    if bot == 0:
        raise ValueError("lower-bound distribution has no BOT mass; padding undefined")
    spins = set(marginal.outcomes) | {o for o in lower.outcomes if o is not BOT}
    pairs = []
    for j in sorted(spins, key=_order_key):
        p = (marginal.prob(j) - lower.prob(j)) / bot
        if p < 0:
            raise BoundaryContractError(
                f"marginal {marginal.prob(j)} of spin {j!r} is below its lower bound {lower.prob(j)}"
            )
        pairs.append((j, p))
    return FiniteDistribution(pairs, exact=marginal.exact and lower.exact)


@dataclass(frozen=True)
class ScanClock:
    """Systematic scan: the update at time ``t`` touches vertex ``(t mod n) + 1``."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("scan clock needs at least one vertex")

    def vertex_at(self, t: int) -> int:
        return t % self.n + 1

    def pred(self, u: int, t: int) -> int:
        """Last time ``s <= t`` at which ``u`` is updated."""
        return t - (t - (u - 1)) % self.n


def idx_at(clock: ScanClock, t: int) -> int:
    return clock.vertex_at(t)


def pred(clock: ScanClock, u: int, t: int) -> int:
    return clock.pred(u, t)


@dataclass
class Tape:
    """Memo of resolved updates ``M`` and lower-bound draws ``R``.

    ``budget`` caps ``|R|``: a fresh draw attempted once ``|R| == budget``
    raises :class:`Truncation`.
    """

    M: dict[int, Any] = field(default_factory=dict)
    R: dict[int, Any] = field(default_factory=dict)
    budget: Optional[int] = None
    padding_draws: int = 0

    def set_resolved(self, t: int, value) -> None:
        if t in self.M:
            raise RuntimeError(f"update at time {t} resolved twice")
        self.M[t] = value


class RandomSource:
    """Where every random choice comes from.

    Point masses never reach the concrete source; they are returned directly
    so that replay, enumeration and live sampling agree on which draws count.
    ``key`` identifies the draw (e.g. ``("lb", t)``) for sources that couple
    by timestamp; the others ignore it.
    """

    def draw(self, dist: FiniteDistribution, key=None):
        items = dist._items
        if len(items) == 1:
            return items[0][0]
        return self._draw(dist, key)

    def _draw(self, dist: FiniteDistribution, key):
        raise NotImplementedError

    def note_tape(self, tape: "Tape") -> None:
        """Hook for sources that collect per-run tape statistics."""

    def note_max(self, name: str, value: int) -> None:
        """Hook for sources that track the maximum of a per-run quantity."""


class RngSource(RandomSource):
    """Independent samples from a seeded Mersenne Twister (``random.Random``)."""

    def __init__(self, seed: int | random.Random | None = None):
        self.rng = seed if isinstance(seed, random.Random) else random.Random(seed)
        self.count = 0

    def _draw(self, dist, key):
        self.count += 1
        if dist.exact:
            denom = math.lcm(*(p.denominator for _, p in dist))
            x = self.rng.randrange(denom)
            acc = 0
            for outcome, p in dist:
                acc += p.numerator * (denom // p.denominator)
                if x < acc:
                    return outcome
            raise AssertionError("exact sampling fell off the end")
        return dist.inverse_cdf(self.rng.random())


class PendingDraw(Exception):
    """Signals a draw beyond the end of a replay prefix (used by the enumerator)."""

    def __init__(self, dist: FiniteDistribution, key=None):
        super().__init__(key)
        self.dist = dist
        self.key = key


class DrawLimitExceeded(Exception):
    """A replayed path asked for more draws than the enumeration budget allows."""


class ReplaySource(RandomSource):
    """Replays recorded outcomes, then delegates to ``fallback`` or signals."""

    def __init__(self, prefix=(), fallback: Optional[RandomSource] = None, limit: Optional[int] = None):
        self.prefix = tuple(prefix)
        self.pos = 0
        self.fallback = fallback
        self.limit = limit
        self.log: list = []

    def _draw(self, dist, key):
        if self.pos < len(self.prefix):
            outcome = self.prefix[self.pos]
            if dist.prob(outcome) == 0:
                raise ValueError(f"replayed outcome {outcome!r} impossible under {dist!r}")
        else:
            if self.limit is not None and self.pos >= self.limit:
                raise DrawLimitExceeded(self.pos)
            if self.fallback is None:
                raise PendingDraw(dist, key)
            outcome = self.fallback.draw(dist, key)
        self.pos += 1
        self.log.append(outcome)
        return outcome


class RecordingSource(RandomSource):
    """Pass-through that logs ``(key, outcome)`` for every non-trivial draw."""

    def __init__(self, inner: RandomSource):
        self.inner = inner
        self.log: list = []

    def _draw(self, dist, key):
        outcome = self.inner.draw(dist, key)
        self.log.append((key, outcome))
        return outcome

    @property
    def outcomes(self) -> list:
        return [o for _, o in self.log]


class ModelSpec(ABC):
    """A single-site model plugged into the engine.

    ``boundary(t, oracle)`` may call ``oracle.lb(s)`` (the lower-bound
    oracle) and ``oracle.resolve(s)`` (the configuration oracle, answered by
    recursion) and returns whatever ``padding_dist`` needs.
    """

    def __init__(self, n: int):
        self.n = n
        self.clock = ScanClock(n)
        lb = self.lower_bound_dist()
        if lb.prob(BOT) == 1:
            raise ValueError("lower-bound distribution is all BOT; the backward deduction cannot terminate")

    @abstractmethod
    def lower_bound_dist(self) -> FiniteDistribution: ...

    @abstractmethod
    def boundary(self, t: int, oracle: "Resolver") -> Any: ...

    @abstractmethod
    def padding_dist(self, t: int, boundary_result: Any) -> FiniteDistribution: ...


class Resolver:
    """One resolve call tree over a shared (tape, source) pair.

    ``horizon`` gives the finite-T variant: times ``<= -horizon`` read the
    initial configuration and their lower-bound oracle answers BOT.
    """

    def __init__(
        self,
        model: ModelSpec,
        tape: Tape,
        src: RandomSource,
        horizon: Optional[int] = None,
        initial: Optional[Mapping[int, Any]] = None,
        step_guard: int = DEFAULT_STEP_GUARD,
    ):
        if horizon is not None and initial is None:
            raise ValueError("finite horizon needs an initial configuration")
        self.model = model
        self.clock = model.clock
        self.tape = tape
        self.src = src
        self.horizon = horizon
        self.initial = initial
        self.step_guard = step_guard
        self.steps = 0
        self._lb_dist = model.lower_bound_dist()

    def lb(self, s: int):
        R = self.tape.R
        if s in R:
            return R[s]
        if self.horizon is not None and s <= -self.horizon:
            return BOT
        if self.tape.budget is not None and len(R) >= self.tape.budget:
            raise Truncation(s)
        r = R[s] = self.src.draw(self._lb_dist, ("lb", s))
        return r

    def resolve(self, t: int):
        if self.horizon is not None and t <= -self.horizon:
            return self.initial[self.clock.vertex_at(t)]
        tape = self.tape
        if t in tape.M:
            return tape.M[t]
        self.steps += 1
        if self.steps > self.step_guard:
            raise NonTermination(f"resolve exceeded {self.step_guard} steps")
        r = self.lb(t)
        if r is not BOT:
            tape.set_resolved(t, r)
            return r
        info = self.model.boundary(t, self)
        pad = self.model.padding_dist(t, info)
        if not pad.is_point():
            tape.padding_draws += 1
        x = self.src.draw(pad, key=("pad", t))
        tape.set_resolved(t, x)
        return x


def lb_sample(t: int, tape: Tape, src: RandomSource, model: ModelSpec):
    if t in tape.R:
        return tape.R[t]
    if tape.budget is not None and len(tape.R) >= tape.budget:
        raise Truncation(t)
    r = src.draw(model.lower_bound_dist(), key=("lb", t))
    tape.R[t] = r
    return r


def resolve(
    t: int,
    tape: Tape,
    src: RandomSource,
    model: ModelSpec,
    step_guard: int = DEFAULT_STEP_GUARD,
    horizon: Optional[int] = None,
    initial: Optional[Mapping[int, Any]] = None,
):
    """Outcome of the update at time ``t`` (infinite past unless ``horizon``)."""
    if t > 0:
        raise ValueError("resolve needs t <= 0")
    try:
        return Resolver(model, tape, src, horizon, initial, step_guard).resolve(t)
    except RecursionError:
        raise NonTermination("recursion depth exhausted") from None


def approx_resolve(
    t: int,
    K: int,
    src: RandomSource,
    model: ModelSpec,
    tape: Optional[Tape] = None,
    step_guard: int = DEFAULT_STEP_GUARD,
):
    """Resolve with at most ``K`` lower-bound draws; TRUNCATED otherwise.

    ``tape`` may be passed (empty) to inspect ``M``/``R`` afterwards.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    if tape is None:
        tape = Tape()
    if tape.M or tape.R:
        raise ValueError("approx_resolve needs a fresh tape")
    tape.budget = K
    try:
        return resolve(t, tape, src, model, step_guard)
    except Truncation:
        return TRUNCATED
