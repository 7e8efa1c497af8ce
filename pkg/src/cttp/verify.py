"""Invariant checks behind ``cttp verify``.

Each suite takes ``(name, hypergraph, annotations)`` triples and returns one
record per check.  Annotations come from fixture comments:
``# expect-indset Z``, ``# expect-colouring q Z`` and ``# q q``.
"""

from __future__ import annotations

import random
from fractions import Fraction
from itertools import product

from .colouring import SetSamplerProgram, choose_scheme, in_regime, not_monochromatic
from .derandomise import EnumerationBudget, enumerate_distribution
from .indset import count_indsets, enumerate_indset_marginal
from .model import edge_prefix
from .oracle import (
    exact_count_colourings,
    exact_count_indsets,
    exact_edge_factors,
    exact_marginal,
    exact_pruned_factors,
    exact_set_marginal,
    exact_vertex_factors,
    projected_conditional,
)
from .randomscan import IndSetGibbs, build_witness_tree, dependency_dag, random_scan_battery

VERIFY_K = 10
COLOURING_K = 6
MAX_COLOURING_CONFIGS = 50_000


def _rec(suite, name, passed, detail):
    return {"suite": suite, "instance": name, "passed": bool(passed), "detail": detail}


def _q(ann):
    return ann.get("q", [3])[0]


def dtv(p: dict, q: dict) -> Fraction:
    keys = set(p) | set(q)
    return sum((abs(p.get(x, Fraction(0)) - q.get(x, Fraction(0))) for x in keys), Fraction(0)) / 2


def check_expected(instances, seed):
    for name, h, ann in instances:
        if "expect-indset" in ann:
            want = ann["expect-indset"][0]
            got = exact_count_indsets(h)
            res = count_indsets(h, K=VERIFY_K)
            ok = got == want and res.contains(want)
            yield _rec("expected-values", name, ok, f"indsets: annotated {want}, exact {got}, interval contains: {res.contains(want)}")
        if "expect-colouring" in ann:
            q, want = ann["expect-colouring"][:2]
            got = exact_count_colourings(h, q)
            yield _rec("expected-values", name, got == want, f"{q}-colourings: annotated {want}, exact {got}")


def check_identities(instances, seed):
    for name, h, ann in instances:
        z = exact_count_indsets(h)
        fs = exact_vertex_factors(h)
        prod = Fraction(1)
        for f in fs:
            prod *= f
        ok = prod * z == 1 and fs == exact_pruned_factors(h)
        yield _rec("oracle-identities", name, ok, f"indsets {z} = 1/prod of {len(fs)} vertex factors")
        q = _q(ann)
        if q**h.n <= MAX_COLOURING_CONFIGS * 20:
            zc = exact_count_colourings(h, q)
            prod = Fraction(q) ** h.n
            for f in exact_edge_factors(h, q):
                prod *= f
            yield _rec("oracle-identities", name, prod == zc, f"{q}-colourings {zc} = q^n * prod of edge factors")


def check_dtv(instances, seed):
    for name, h, ann in instances:
        worst = None
        ok = True
        for v in h.vertices:
            dist = enumerate_indset_marginal(h, v, VERIFY_K)
            mu = exact_marginal(h, "indset", v)
            deficit = sum((mu.prob(j) - dist.prob(j) for j in (0, 1)), Fraction(0))
            ok &= all(dist.prob(j) <= mu.prob(j) for j in (0, 1)) and deficit == dist.truncation_mass
            worst = max(worst or 0, dist.truncation_mass)
        yield _rec("dtv-tau", name, ok, f"indset marginals: deficit equals truncation mass (max tau {float(worst or 0):.3g})")
        q = _q(ann)
        if not h.edges or q**h.n > MAX_COLOURING_CONFIGS:
            continue
        scheme = choose_scheme(h, q)
        ok, detail = True, []
        for i, e in enumerate(h.edges, start=1):
            sub = edge_prefix(h, i - 1)
            dist = enumerate_distribution(SetSamplerProgram(sub, scheme, e, COLOURING_K), EnumerationBudget(leaf_cap=200_000))
            merged = dist.merged((1,) * len(e))
            exact = dict(exact_set_marginal(sub, q, e))
            d = dtv(merged, exact)
            ok &= d <= dist.truncation_mass
            detail.append(f"{float(d):.3g}<={float(dist.truncation_mass):.3g}")
        yield _rec("dtv-tau", name, ok, f"q={q} s={scheme.s} set marginals: " + ", ".join(detail))


def local_uniformity_violations(h, q, scheme, conditional=projected_conditional):
    """Projected conditionals (given every other vertex's class) outside the local-uniformity band."""
    s = scheme.s
    bad = []
    for v in h.vertices:
        others = [u for u in h.vertices if u != v]
        for classes in product(range(1, s + 1), repeat=len(others)):
            pin = dict(zip(others, classes))
            try:
                law = conditional(h, scheme, v, pin)
            except ValueError:
                continue
            for j in range(1, s + 1):
                base = Fraction(len(scheme.preimages[j - 1]), q)
                p = law.prob(j)
                if not base * (1 - Fraction(1, 4 * s)) <= p <= base * (1 + Fraction(1, s)):
                    bad.append((v, pin, j, p))
    return bad


def check_local_uniformity(instances, seed):
    for name, h, ann in instances:
        q = _q(ann)
        if not h.edges:
            continue
        scheme = choose_scheme(h, q)
        k = h.uniformity or max(len(e) for e in h.edges)
        if not in_regime(q, scheme.s, h.max_degree, k):
            yield _rec("local-uniformity", name, True, f"q={q}: outside the regime, nothing to check")
            continue
        bad = local_uniformity_violations(h, q, scheme)
        yield _rec("local-uniformity", name, not bad, f"q={q} s={scheme.s}: {len(bad)} conditionals outside the band")


def check_witness(instances, seed, trials=200):
    rng = random.Random(seed)
    for name, h, ann in instances:
        model = IndSetGibbs(h)
        ok = True
        for _ in range(trials):
            v = rng.randint(1, h.n)
            K = rng.randint(1, 10)
            scan, choices = random_scan_battery(model, v, K, rng, length=64 * (K + h.n))
            tree, A = build_witness_tree(model, v, scan, choices, K)
            ok &= tree.level_unique() and dependency_dag(model, tree).boundary == A
        yield _rec("witness-reconstruction", name, ok, f"{trials} random (scan, choices) pairs")


SUITES = {
    "expected-values": check_expected,
    "oracle-identities": check_identities,
    "dtv-tau": check_dtv,
    "local-uniformity": check_local_uniformity,
    "witness-reconstruction": check_witness,
}


def run_suites(instances, suites, seed=0) -> list:
    out = []
    for s in suites:
        out.extend(SUITES[s](instances, seed))
    return out
