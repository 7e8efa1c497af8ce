"""Hypergraph instances, the ``.hg`` text format and self-reduction transforms."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence


class HypergraphFormatError(ValueError):
    """Malformed ``.hg`` input. ``lineno`` is 1-based, or None for end of file."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class InstanceStats:
    n: int
    m: int
    k: Optional[int]
    max_degree: int
    is_linear: bool
    isolated_vertex_count: int
    duplicate_edge_count: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "k": self.k,
            "max_degree": self.max_degree,
            "is_linear": self.is_linear,
            "isolated_vertex_count": self.isolated_vertex_count,
            "duplicate_edge_count": self.duplicate_edge_count,
        }


@dataclass(frozen=True)
class Hypergraph:
    """A hypergraph on vertices ``1..n``.

    Edges are stored as ascending vertex tuples in input order; the order is
    significant, it fixes the edge-decomposition sequence and the
    lowest-index rule of the boundary searches.
    """

    n: int
    edges: tuple[tuple[int, ...], ...]
    k: Optional[int] = None
    _incident: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("vertex count must be non-negative")
        edges = tuple(tuple(sorted(e)) for e in self.edges)
        for idx, e in enumerate(edges):
            if len(set(e)) != len(e):
                raise ValueError(f"edge {idx} repeats a vertex: {e}")
            for u in e:
                if not 1 <= u <= self.n:
                    raise ValueError(f"edge {idx} has vertex {u} outside 1..{self.n}")
            if self.k is not None and len(e) != self.k:
                raise ValueError(f"edge {idx} has size {len(e)}, expected k={self.k}")
        object.__setattr__(self, "edges", edges)
        incident: list[list[int]] = [[] for _ in range(self.n + 1)]
        for idx, e in enumerate(edges):
            for u in e:
                incident[u].append(idx)
        object.__setattr__(self, "_incident", tuple(tuple(x) for x in incident))

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def vertices(self) -> range:
        return range(1, self.n + 1)

    def incident_edges(self, v: int) -> tuple[int, ...]:
        """Indices of the edges containing ``v``, ascending."""
        return self._incident[v]

    def degree(self, v: int) -> int:
        return len(self._incident[v])

    @property
    def max_degree(self) -> int:
        return max((len(x) for x in self._incident[1:]), default=0)

    @property
    def uniformity(self) -> Optional[int]:
        if self.k is not None:
            return self.k
        sizes = {len(e) for e in self.edges}
        return sizes.pop() if len(sizes) == 1 else None

    def neighbours(self, v: int) -> tuple[int, ...]:
        """Vertices sharing at least one edge with ``v``."""
        out = set()
        for idx in self._incident[v]:
            out.update(self.edges[idx])
        out.discard(v)
        return tuple(sorted(out))

    def is_linear(self) -> bool:
        return all(len(set(a) & set(b)) <= 1 for a, b in combinations(self.edges, 2))

    def stats(self) -> InstanceStats:
        return InstanceStats(
            n=self.n,
            m=self.m,
            k=self.uniformity,
            max_degree=self.max_degree,
            is_linear=self.is_linear(),
            isolated_vertex_count=sum(1 for v in self.vertices if not self._incident[v]),
            duplicate_edge_count=self.m - len(set(self.edges)),
        )

    def components(self) -> list[list[int]]:
        """Connected components as ascending vertex lists, ordered by least vertex."""
        parent = list(range(self.n + 1))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.edges:
            for u in e[1:]:
                a, b = find(e[0]), find(u)
                if a != b:
                    parent[max(a, b)] = min(a, b)
        groups: dict[int, list[int]] = {}
        for v in self.vertices:
            groups.setdefault(find(v), []).append(v)
        return [groups[r] for r in sorted(groups)]

    def serialise(self) -> str:
        k = self.k if self.k is not None else (self.uniformity or 0)
        lines = [f"{self.n} {self.m} {k}"]
        lines.extend(" ".join(map(str, e)) for e in self.edges)
        return "\n".join(lines) + "\n"


def parse_hypergraph(text: str | Iterable[str]) -> Hypergraph:
    """Parse the ``.hg`` format: header ``n m k`` then ``m`` edge lines.

    Lines starting with ``#`` and blank lines are ignored.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    header = None
    edges: list[tuple[int, ...]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            nums = [int(tok) for tok in line.split()]
        except ValueError:
            raise HypergraphFormatError(f"non-integer token in {line!r}", lineno) from None
        if header is None:
            if len(nums) != 3 or min(nums) < 0:
                raise HypergraphFormatError("header must be three non-negative integers 'n m k'", lineno)
            header = nums
            continue
        n, m, k = header
        if len(edges) == m:
            raise HypergraphFormatError(f"more than the declared {m} edges", lineno)
        if len(nums) != k:
            raise HypergraphFormatError(f"edge has {len(nums)} vertices, expected k={k}", lineno)
        if len(set(nums)) != len(nums):
            raise HypergraphFormatError(f"duplicate vertex in edge {nums}", lineno)
        for u in nums:
            if not 1 <= u <= n:
                raise HypergraphFormatError(f"vertex {u} out of range 1..{n}", lineno)
        edges.append(tuple(nums))
    if header is None:
        raise HypergraphFormatError("missing header line")
    n, m, k = header
    if len(edges) != m:
        raise HypergraphFormatError(f"expected {m} edges, found {len(edges)}")
    return Hypergraph(n, tuple(edges), k)


def prune_for_vertex_decomposition(h: Hypergraph, i: int) -> Hypergraph:
    """Drop ``v_1..v_{i-1}`` and every edge touching them; re-index so ``v_i`` becomes 1."""
    if not 1 <= i <= h.n:
        raise ValueError(f"vertex index {i} out of range 1..{h.n}")
    shift = i - 1
    kept = tuple(tuple(u - shift for u in e) for e in h.edges if e[0] >= i)
    return Hypergraph(h.n - shift, kept, h.k)


def edge_prefix(h: Hypergraph, i: int) -> Hypergraph:
    """Same vertex set, first ``i`` edges."""
    if not 0 <= i <= h.m:
        raise ValueError(f"edge count {i} out of range 0..{h.m}")
    return Hypergraph(h.n, h.edges[:i], h.k)


def random_hypergraph(
    n: int,
    k: int,
    m: int,
    max_degree: Optional[int] = None,
    seed: int = 0,
    linear: bool = False,
    attempts: int = 200,
) -> Hypergraph:
    """Seeded random k-uniform hypergraph with at most ``m`` distinct edges.

    Edges that would break the degree cap or linearity are rejected; the result
    may have fewer than ``m`` edges when the constraints bite.
    """
    rng = random.Random(seed)
    deg = [0] * (n + 1)
    edges: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    tries = 0
    while len(edges) < m and tries < attempts:
        tries += 1
        e = tuple(sorted(rng.sample(range(1, n + 1), k)))
        if e in seen:
            continue
        if max_degree is not None and any(deg[u] >= max_degree for u in e):
            continue
        if linear and any(len(set(e) & set(f)) > 1 for f in edges):
            continue
        seen.add(e)
        edges.append(e)
        for u in e:
            deg[u] += 1
    return Hypergraph(n, tuple(edges), k)


def from_edges(n: int, edges: Sequence[Sequence[int]], k: Optional[int] = None) -> Hypergraph:
    return Hypergraph(n, tuple(tuple(e) for e in edges), k)
