"""Witness-tree derandomisation of random-scan Glauber dynamics.

Under a uniformly random scan the chronology that matters for resolving one
vertex is captured by a witness tree: each node is an update (vertex label,
lower-bound choice) and the tree records which earlier updates a ``BOT``
update had to look at.  Summing over all witness trees of size at most ``K``
gives the exact output law of the truncated random-scan sampler.
"""

from __future__ import annotations

import random
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import BOT, TRUNCATED, FiniteDistribution, RandomSource, RngSource, _order_key, padding_from_marginal
from .derandomise import EnumerationBudget, EnumerationOverflow, OutputDistribution
from .indset import LB_DIST
from .model import Hypergraph


class GibbsModel(ABC):
    """A q-spin Gibbs distribution exposing neighbourhoods and local conditionals."""

    vertices: tuple

    @abstractmethod
    def neighbours(self, v) -> tuple:
        """Sorted tuple of vertices whose spins the conditional at ``v`` reads."""

    @abstractmethod
    def lower_bound_dist(self) -> FiniteDistribution:
        ...

    @abstractmethod
    def conditional_marginal(self, v, pinning: dict) -> FiniteDistribution:
        """Law of ``v`` given the spins of all its neighbours."""

    def padding_dist(self, v, pinning: dict) -> FiniteDistribution:
        return padding_from_marginal(self.conditional_marginal(v, pinning), self.lower_bound_dist())


class IndSetGibbs(GibbsModel):
    """Uniform independent sets of a hypergraph as a Gibbs distribution."""

    def __init__(self, h: Hypergraph):
        self.h = h
        self.vertices = h.vertices
        self._nbrs = {v: h.neighbours(v) for v in h.vertices}
        self._cache = {}

    def neighbours(self, v):
        return self._nbrs[v]

    def lower_bound_dist(self):
        return LB_DIST

    def conditional_marginal(self, v, pinning):
        for i in self.h.incident_edges(v):
            if all(pinning[u] == 1 for u in self.h.edges[i] if u != v):
                return FiniteDistribution.point(0)
        return FiniteDistribution.uniform((0, 1))

    def padding_dist(self, v, pinning):
        key = (v, tuple(pinning[u] for u in self._nbrs[v]))
        pad = self._cache.get(key)
        if pad is None:
            pad = self._cache[key] = super().padding_dist(v, pinning)
        return pad


@dataclass(frozen=True)
class WitnessTree:
    """Nodes in insertion order; node 0 is the root.

    ``parents[i]`` is the index of node ``i``'s parent (-1 for the root) and
    ``depths[i]`` its distance from the root.
    """

    labels: tuple
    choices: tuple
    parents: tuple
    depths: tuple

    @classmethod
    def root(cls, v, r) -> "WitnessTree":
        return cls((v,), (r,), (-1,), (0,))

    def __len__(self):
        return len(self.labels)

    def children(self, i) -> list:
        return [j for j, p in enumerate(self.parents) if p == i]

    def leaves(self) -> list:
        inner = set(self.parents)
        return [i for i in range(len(self)) if i not in inner]

    def attach(self, parent: int, u, r) -> "WitnessTree":
        return WitnessTree(
            self.labels + (u,),
            self.choices + (r,),
            self.parents + (parent,),
            self.depths + (self.depths[parent] + 1,),
        )

    def remove(self, leaf: int) -> "WitnessTree":
        keep = [i for i in range(len(self)) if i != leaf]
        where = {old: new for new, old in enumerate(keep)}
        return WitnessTree(
            tuple(self.labels[i] for i in keep),
            tuple(self.choices[i] for i in keep),
            tuple(where.get(self.parents[i], -1) for i in keep),
            tuple(self.depths[i] for i in keep),
        )

    def canonical(self, i: int = 0):
        """Nested ``(vertex, choice, children)`` with children sorted by vertex label."""
        kids = sorted(self.children(i), key=lambda j: _order_key(self.labels[j]))
        return (self.labels[i], self.choices[i], tuple(self.canonical(j) for j in kids))

    def level_unique(self) -> bool:
        seen = set()
        for lab, d in zip(self.labels, self.depths):
            if (lab, d) in seen:
                return False
            seen.add((lab, d))
        return True


def insertion_parent(model: GibbsModel, tree: WitnessTree, u) -> int:
    """Deepest node whose vertex has ``u`` as a neighbour; ties go to the smallest label."""
    best = None
    for i, (lab, d) in enumerate(zip(tree.labels, tree.depths)):
        if u in model.neighbours(lab):
            key = (-d, _order_key(lab))
            if best is None or key < best[0]:
                best = (key, i)
    if best is None:
        raise ValueError(f"no node of the tree neighbours {u!r}")
    return best[1]


class ScanExhausted(RuntimeError):
    pass


def build_witness_tree(model: GibbsModel, v, scan, choices, K: int):
    """Grow the witness tree of ``v`` from a backward scan.

    ``scan[j]`` is the vertex updated at time ``-j`` and ``choices[j]`` its
    lower-bound choice; ``scan[0]`` must be ``v``.  Returns the tree and the
    set of still-unresolved vertices.
    """
    if scan[0] != v:
        raise ValueError("the scan must update the root at time 0")
    tree = WitnessTree.root(v, choices[0])
    if choices[0] is not BOT:
        return tree, frozenset()
    active = set(model.neighbours(v))
    j = 0
    while active and len(tree) < K:
        j += 1
        while j < len(scan) and scan[j] not in active:
            j += 1
        if j >= len(scan):
            raise ScanExhausted(f"scan of length {len(scan)} ended with {sorted(active)} unresolved")
        u, r = scan[j], choices[j]
        active.discard(u)
        tree = tree.attach(insertion_parent(model, tree, u), u, r)
        if r is BOT:
            active.update(model.neighbours(u))
    return tree, frozenset(active)


@dataclass(frozen=True)
class DependencyDag:
    """Arcs ``(beta, alpha)``: the update ``beta`` supplies a neighbour spin to ``alpha``."""

    arcs: tuple
    boundary: frozenset

    def sources(self, alpha) -> list:
        return [b for b, a in self.arcs if a == alpha]


def dependency_dag(model: GibbsModel, tree: WitnessTree) -> DependencyDag:
    arcs, boundary = [], set()
    for a in range(len(tree)):
        if tree.choices[a] is not BOT:
            continue
        for u in model.neighbours(tree.labels[a]):
            below = [b for b in range(len(tree)) if tree.labels[b] == u and tree.depths[b] > tree.depths[a]]
            if below:
                arcs.append((min(below, key=lambda b: tree.depths[b]), a))
            else:
                boundary.add(u)
    return DependencyDag(tuple(arcs), frozenset(boundary))


def tree_probability(model: GibbsModel, tree: WitnessTree, memo: Optional[dict] = None, check_insertion: bool = True) -> Fraction:
    """Probability that the witness tree of the root is (at some stage) ``tree``.

    Leaf-removal recursion: the last node added is some leaf, the removal
    leaves a smaller tree whose unresolved set must contain the leaf's vertex,
    and the next unresolved vertex hit by a uniform scan is uniform over that
    set.  With ``check_insertion`` a leaf only counts when re-inserting it into
    the smaller tree puts it back under the same parent.
    """
    memo = {} if memo is None else memo
    lb = model.lower_bound_dist()

    def f(t: WitnessTree) -> Fraction:
        key = t.canonical()
        if key in memo:
            return memo[key]
        if len(t) == 1:
            val = lb.prob(t.choices[0])
        else:
            val = Fraction(0)
            for leaf in t.leaves():
                smaller = t.remove(leaf)
                if smaller.choices[0] is not BOT:
                    continue
                B = dependency_dag(model, smaller).boundary
                u = t.labels[leaf]
                if u not in B:
                    continue
                if check_insertion:
                    back = smaller.attach(insertion_parent(model, smaller, u), u, t.choices[leaf])
                    if back.canonical() != key:
                        continue
                val += f(smaller) * Fraction(1, len(B)) * lb.prob(t.choices[leaf])
        memo[key] = val
        return val

    return f(tree)


def is_full(model: GibbsModel, tree: WitnessTree) -> bool:
    return tree.choices[0] is not BOT or not dependency_dag(model, tree).boundary


def root_distribution(model: GibbsModel, tree: WitnessTree) -> FiniteDistribution:
    """Law of the root's spin given that the witness tree is ``tree`` (which must be full)."""
    dag = dependency_dag(model, tree)
    if dag.boundary:
        raise ValueError("conditional marginal needs a full witness tree")
    srcs = defaultdict(list)
    for b, a in dag.arcs:
        srcs[a].append(b)
    # deeper nodes first is a topological order since arcs point upward
    order = sorted(range(len(tree)), key=lambda i: -tree.depths[i])
    law = defaultdict(Fraction)

    def walk(pos: int, spins: dict, p: Fraction):
        if pos == len(order):
            law[spins[0]] += p
            return
        a = order[pos]
        if tree.choices[a] is not BOT:
            spins[a] = tree.choices[a]
            walk(pos + 1, spins, p)
            return
        if len(srcs[a]) != len(model.neighbours(tree.labels[a])):
            raise AssertionError("a BOT node of a full tree is missing a dependency")
        pin = {tree.labels[b]: spins[b] for b in srcs[a]}
        for x, px in model.padding_dist(tree.labels[a], pin):
            spins[a] = x
            walk(pos + 1, spins, p * px)
        del spins[a]

    walk(0, {}, Fraction(1))
    return FiniteDistribution(sorted(law.items(), key=lambda kv: _order_key(kv[0])))


def conditional_marginal_given_tree(model: GibbsModel, tree: WitnessTree, spin) -> Fraction:
    return root_distribution(model, tree).prob(spin)


@dataclass
class TreeCensus:
    by_size: dict = field(default_factory=dict)
    full_by_size: dict = field(default_factory=dict)
    truncated_trees: int = 0
    dp_checked: int = 0

    def to_dict(self) -> dict:
        return {
            "trees_by_size": {str(k): v for k, v in sorted(self.by_size.items())},
            "full_trees_by_size": {str(k): v for k, v in sorted(self.full_by_size.items())},
            "truncated_trees": self.truncated_trees,
            "dp_checked": self.dp_checked,
        }


def enumerate_witness_trees(model: GibbsModel, v, K: int, budget: Optional[EnumerationBudget] = None):
    """All witness trees of ``v`` with at most ``K`` nodes and their probabilities.

    Trees are grown layer by layer: every non-full tree of size ``L < K``
    extends by each unresolved vertex (probability ``1/|A|``) and each
    lower-bound choice.  Returns ``{canonical: (tree, probability, full)}``.
    """
    budget = budget or EnumerationBudget()
    lb = model.lower_bound_dist()
    layer = {}
    for r, p in lb:
        t = WitnessTree.root(v, r)
        layer[t.canonical()] = [t, p]
    out = {}
    size = 1
    while layer:
        nxt = {}
        for key in sorted(layer, key=repr):
            t, p = layer[key]
            A = dependency_dag(model, t).boundary if t.choices[0] is BOT else frozenset()
            out[key] = (t, p, not A)
            if len(out) > budget.leaf_cap:
                raise EnumerationOverflow(f"leaf cap {budget.leaf_cap} exceeded", {"trees": len(out), "size": size})
            if not A or size >= K:
                continue
            share = p / len(A)
            for u in sorted(A, key=_order_key):
                parent = insertion_parent(model, t, u)
                for r, pr in lb:
                    child = t.attach(parent, u, r)
                    ck = child.canonical()
                    if ck in nxt:
                        nxt[ck][1] += share * pr
                    else:
                        nxt[ck] = [child, share * pr]
        layer = nxt
        size += 1
    return out


def randomscan_marginal(
    model: GibbsModel,
    v,
    K: int,
    budget: Optional[EnumerationBudget] = None,
    check_dp: bool = True,
) -> OutputDistribution:
    """Exact output law of the truncated random-scan sampler at ``v``.

    Full trees contribute their root law; non-full trees of size ``K`` are
    the truncation mass.  With ``check_dp`` every tree's probability is also
    recomputed by leaf removal and must match the forward value.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    trees = enumerate_witness_trees(model, v, K, budget)
    census = TreeCensus()
    probs = defaultdict(Fraction)
    trunc = Fraction(0)
    memo = {}
    max_full = 0
    for key, (t, p, full) in trees.items():
        n = len(t)
        census.by_size[n] = census.by_size.get(n, 0) + 1
        if check_dp:
            q = tree_probability(model, t, memo)
            if q != p:
                raise AssertionError(f"leaf-removal probability {q} differs from forward value {p} for {key}")
            census.dp_checked += 1
        if full:
            census.full_by_size[n] = census.full_by_size.get(n, 0) + 1
            max_full = max(max_full, n)
            for x, px in root_distribution(model, t):
                probs[x] += p * px
        elif n == K:
            census.truncated_trees += 1
            trunc += p
    dist = OutputDistribution(
        {x: probs[x] for x in sorted(probs, key=_order_key)},
        trunc,
        sum(census.full_by_size.values()) + census.truncated_trees,
        max_full,
        dict(census.full_by_size),
        {"census": census.to_dict()},
    )
    if dist.total() != 1:
        raise AssertionError(f"witness-tree masses sum to {dist.total()}")
    return dist


class _RandomScan:
    """A backward scan generated on demand: ``S(0) = v``, earlier entries uniform."""

    def __init__(self, vertices, v, rng: random.Random):
        self.vertices = tuple(vertices)
        self.rng = rng
        self.seq = [v]

    def at(self, t: int):
        while len(self.seq) <= -t:
            self.seq.append(self.vertices[self.rng.randrange(len(self.vertices))])
        return self.seq[-t]

    def pred(self, u, t: int) -> int:
        while self.at(t) != u:
            t -= 1
        return t


def approx_resolve_random(model: GibbsModel, v, K: int, src: RandomSource, rng: Optional[random.Random] = None):
    """One run of the truncated random-scan sampler; returns a spin or TRUNCATED.

    The scan comes from ``rng`` (defaults to the source's generator), the
    lower-bound and padding choices from ``src``.  Every neighbour of a ``BOT``
    update is resolved, matching the witness-tree construction.
    """
    rng = rng or src.rng
    scan = _RandomScan(model.vertices, v, rng)
    lb = model.lower_bound_dist()
    M, R = {}, {}

    def resolve(t):
        if t in M:
            return M[t]
        if t not in R:
            if len(R) >= K:
                raise _Truncated
            R[t] = src.draw(lb, ("lb", t))
        r = R[t]
        if r is BOT:
            w = scan.at(t)
            pin = {u: resolve(scan.pred(u, t - 1)) for u in model.neighbours(w)}
            r = src.draw(model.padding_dist(w, pin), ("pad", t))
        M[t] = r
        return r

    try:
        return resolve(0)
    except _Truncated:
        return TRUNCATED


class _Truncated(Exception):
    pass


def random_scan_battery(model: GibbsModel, v, K: int, rng: random.Random, length: int = 4096):
    """A random (scan, choices) pair long enough for :func:`build_witness_tree` in practice."""
    lb = model.lower_bound_dist()
    src = RngSource(rng)
    scan = [v] + [model.vertices[rng.randrange(len(model.vertices))] for _ in range(length - 1)]
    choices = [src.draw(lb) for _ in range(length)]
    return scan, choices


def all_trees_upto(model: GibbsModel, v, K: int):
    """Every reachable witness tree (by canonical key) with its forward probability."""
    return {k: (t, p) for k, (t, p, _) in enumerate_witness_trees(model, v, K).items()}


__all__ = [
    "GibbsModel",
    "IndSetGibbs",
    "WitnessTree",
    "DependencyDag",
    "ScanExhausted",
    "TreeCensus",
    "build_witness_tree",
    "dependency_dag",
    "tree_probability",
    "is_full",
    "root_distribution",
    "conditional_marginal_given_tree",
    "enumerate_witness_trees",
    "randomscan_marginal",
    "approx_resolve_random",
    "random_scan_battery",
    "all_trees_upto",
]
