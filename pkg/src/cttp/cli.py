"""Command-line front end.

Exit codes: 0 success, 1 unreadable or malformed input, 2 uncertifiable
result or failed verification, 3 enumeration budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import __version__
from .colouring import (
    SetSamplerProgram,
    choose_scheme,
    colouring_K_for_eps,
    count_colourings,
    marginal_set_sampler,
)
from .core import TRUNCATED
from .derandomise import (
    EnumerationBudget,
    EnumerationOverflow,
    default_leaf_cap,
    enumerate_distribution,
    outcome_json,
    rational_json,
)
from .indset import count_indsets, enumerate_indset_marginal, indset_K_for_eps, marginal_sampler_indset
from .model import HypergraphFormatError, parse_hypergraph
from .oracle import (
    InfeasiblePinning,
    OracleBudgetExceeded,
    exact_count_colourings,
    exact_count_indsets,
    exact_marginal,
    monte_carlo_distribution,
)
from .randomscan import IndSetGibbs, approx_resolve_random, randomscan_marginal

log = logging.getLogger("cttp")

EXIT_OK, EXIT_INPUT, EXIT_UNCERTIFIED, EXIT_OVERFLOW = 0, 1, 2, 3


class InputError(Exception):
    pass


def load_instance(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return parse_hypergraph(text)
    except HypergraphFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def fixture_paths(include_corrupted: bool = False) -> list:
    root = resources.files("cttp") / "fixtures"
    paths = sorted(str(p) for p in root.iterdir() if p.name.endswith(".hg"))
    if include_corrupted:
        paths += sorted(str(p) for p in (root / "corrupted").iterdir() if p.name.endswith(".hg"))
    return paths


def _budget(args) -> EnumerationBudget:
    return EnumerationBudget(leaf_cap=args.leaf_cap or default_leaf_cap(), wall_clock=args.wall_clock)


def _echo(args) -> dict:
    """Flags that determine the result; scheduling options are left out."""
    skip = {"func", "text", "jobs", "json", "timing", "verbose", "wall_clock", "leaf_cap"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _law_json(probs: dict) -> list:
    return [[outcome_json(o), rational_json(p)] for o, p in probs]


def _empirical_json(emp) -> dict:
    keyed = sorted(emp.counts.items(), key=lambda kv: repr(kv[0]))
    return {
        "trials": emp.trials,
        "seed": emp.seed,
        "outcomes": [
            [outcome_json(o), {"count": c, "frequency": c / emp.trials, "stderr": emp.stderr(o)}]
            for o, c in keyed
        ],
    }


def _parse_set(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"bad vertex list {text!r}") from None


def _parse_pinning(text) -> dict:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        try:
            u, x = item.split("=")
            out[int(u)] = int(x)
        except ValueError:
            raise InputError(f"bad pinning entry {item!r}; use u=x") from None
    return out


def _check_vertices(h, vs):
    for v in vs:
        if not 1 <= v <= h.n:
            raise InputError(f"vertex {v} out of range 1..{h.n}")


# count -------------------------------------------------------------------------


def cmd_count(args) -> tuple[dict, int]:
    h = load_instance(args.file)
    if (args.K is None) == (args.eps is None):
        raise InputError("give exactly one of --K and --eps")
    eps = Fraction(args.eps) if args.eps is not None else None
    if args.kind == "colouring" and args.q is None:
        raise InputError("colouring needs --q")
    K = args.K
    if eps is not None:
        linear = args.linear
        K = indset_K_for_eps(h, eps, linear) if args.kind == "indset" else colouring_K_for_eps(h, eps, linear)
        branching = 2 if args.kind == "indset" else choose_scheme(h, args.q, args.s, "linear" if linear else "general").s + 1
        if K * math.log2(branching) > math.log2(default_leaf_cap() if not args.leaf_cap else args.leaf_cap):
            log.warning(
                "eps=%s implies K=%d; worst-case enumeration exceeds the leaf cap, consider an explicit --K",
                args.eps, K,
            )
    budget = _budget(args)
    if args.kind == "indset":
        res = count_indsets(h, K=K, lazy=not args.eager, budget=budget, jobs=args.jobs)
    else:
        variant = "linear" if args.linear else "general"
        res = count_colourings(h, args.q, K=K, s=args.s, variant=variant, lazy=not args.eager, budget=budget, jobs=args.jobs)
    report = {
        "command": "count",
        "flags": _echo(args),
        "instance": h.stats().to_dict(),
        "result": res.to_dict(),
    }
    if args.kind == "colouring":
        report["result"]["s"] = res.scheme.s
    return report, EXIT_OK if res.certified else EXIT_UNCERTIFIED


def _count_text(report) -> str:
    r = report["result"]
    lines = [f"K = {r['K']}, {len(r['factors'])} factors"]
    if r["estimate"] is not None:
        lines.append(f"estimate  {r['estimate']['decimal']:.6g}  ({r['estimate']['rational']})")
    if r["certified"]:
        lo, hi = r["interval"]
        lines.append(f"interval  [{lo['decimal']:.6g}, {hi['decimal']:.6g}]")
    else:
        lines.append("not certified: some factor interval reaches zero")
    return "\n".join(lines)


# marginal ----------------------------------------------------------------------


def cmd_marginal(args) -> tuple[dict, int]:
    h = load_instance(args.file)
    report = {"command": "marginal", "flags": _echo(args), "instance": h.stats().to_dict()}
    if args.kind == "indset":
        if args.vertex is None:
            raise InputError("indset marginal needs --vertex")
        _check_vertices(h, [args.vertex])
        if args.mode == "derandomised":
            dist = enumerate_indset_marginal(h, args.vertex, args.K, _budget(args))
            report["distribution"] = dist.to_json_dict()
        else:
            sampler = lambda src: _mark(marginal_sampler_indset(h, args.vertex, args.K, src))
            report["empirical"] = _empirical_json(monte_carlo_distribution(sampler, args.trials, args.seed))
        return report, EXIT_OK
    if args.q is None:
        raise InputError("colouring needs --q")
    S = _parse_set(args.set) if args.set else ((args.vertex,) if args.vertex else None)
    if S is None:
        raise InputError("colouring marginal needs --set or --vertex")
    _check_vertices(h, S)
    scheme = choose_scheme(h, args.q, args.s)
    report["s"] = scheme.s
    if args.mode == "derandomised":
        dist = enumerate_distribution(SetSamplerProgram(h, scheme, S, args.K, emit=True), _budget(args), jobs=args.jobs)
        report["distribution"] = dist.to_json_dict()
    else:
        sampler = lambda src: _mark(marginal_set_sampler(h, scheme, S, args.K, src))
        report["empirical"] = _empirical_json(monte_carlo_distribution(sampler, args.trials, args.seed))
    return report, EXIT_OK


def _mark(result):
    value, truncated = result
    return TRUNCATED if truncated else value


def _marginal_text(report) -> str:
    if "distribution" in report:
        d = report["distribution"]
        lines = [f"{o}: {p['rational']} ({p['decimal']:.6g})" for o, p in d["outcomes"]]
        lines.append(f"truncation mass: {d['truncation_mass']['rational']}  leaves: {d['leaf_count']}")
        return "\n".join(lines)
    e = report["empirical"]
    return "\n".join(
        f"{o}: {s['frequency']:.5f} +- {s['stderr']:.5f}  ({s['count']}/{e['trials']})" for o, s in e["outcomes"]
    )


# randomscan --------------------------------------------------------------------


def cmd_randomscan(args) -> tuple[dict, int]:
    h = load_instance(args.file)
    _check_vertices(h, [args.vertex])
    model = IndSetGibbs(h)
    report = {"command": "randomscan", "flags": _echo(args), "instance": h.stats().to_dict()}
    if args.mode == "derandomised":
        dist = randomscan_marginal(model, args.vertex, args.K, _budget(args))
        out = dist.to_json_dict()
        out["census"] = dist.stats["census"]
        report["distribution"] = out
    else:
        sampler = lambda src: approx_resolve_random(model, args.vertex, args.K, src)
        report["empirical"] = _empirical_json(monte_carlo_distribution(sampler, args.trials, args.seed))
    return report, EXIT_OK


# oracle ------------------------------------------------------------------------


def cmd_oracle(args) -> tuple[dict, int]:
    h = load_instance(args.file)
    report = {"command": "oracle", "flags": _echo(args), "instance": h.stats().to_dict()}
    if args.kind in ("colouring", "projected") and args.q is None:
        raise InputError(f"{args.kind} needs --q")
    if args.what == "count":
        if args.kind == "indset":
            report["count"] = exact_count_indsets(h)
        elif args.kind == "colouring":
            report["count"] = exact_count_colourings(h, args.q)
        else:
            raise InputError("count is defined for indset and colouring")
        return report, EXIT_OK
    if args.vertex is None:
        raise InputError("oracle marginal needs --vertex")
    pin = _parse_pinning(args.pin)
    _check_vertices(h, [args.vertex, *pin])
    scheme = choose_scheme(h, args.q, args.s) if args.kind == "projected" else None
    try:
        law = exact_marginal(h, args.kind, args.vertex, pin, q=args.q, scheme=scheme)
    except InfeasiblePinning as exc:
        report["error"] = str(exc)
        return report, EXIT_UNCERTIFIED
    report["marginal"] = _law_json(law)
    if scheme is not None:
        report["s"] = scheme.s
    return report, EXIT_OK


# verify ------------------------------------------------------------------------


def cmd_verify(args) -> tuple[dict, int]:
    from .verify import SUITES, run_suites

    paths = args.files or fixture_paths()
    instances = []
    for p in paths:
        h = load_instance(p)
        instances.append((Path(p).name, h, _annotations(Path(p).read_text())))
    suites = args.suite or list(SUITES)
    for s in suites:
        if s not in SUITES:
            raise InputError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    checks = run_suites(instances, suites, seed=args.seed)
    failed = [c for c in checks if not c["passed"]]
    report = {
        "command": "verify",
        "flags": _echo(args),
        "checks": checks,
        "passed": len(checks) - len(failed),
        "failed": len(failed),
    }
    return report, EXIT_OK if not failed else EXIT_UNCERTIFIED


def _annotations(text: str) -> dict:
    """``# key value...`` comment lines, e.g. ``# expect-indset 3``."""
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) >= 2 and all(x.isdigit() for x in parts[1:]):
                out[parts[0]] = [int(x) for x in parts[1:]]
    return out


def _verify_text(report) -> str:
    lines = [f"{'PASS' if c['passed'] else 'FAIL'}  {c['suite']:<22} {c['instance']:<18} {c['detail']}" for c in report["checks"]]
    lines.append(f"{report['passed']} passed, {report['failed']} failed")
    return "\n".join(lines)


# parser ------------------------------------------------------------------------


def _common(p, jobs=True):
    p.add_argument("--json", action="store_true", help="emit the JSON report on stdout")
    p.add_argument("--timing", action="store_true", help="add wall-clock time to the JSON report")
    p.add_argument("--leaf-cap", type=int, default=None, help="enumeration leaf cap (default: $CTTP_LEAF_CAP or 2000000)")
    p.add_argument("--wall-clock", type=float, default=None, help="enumeration time limit in seconds")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="worker processes for enumeration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cttp", description="Derandomised counting and marginal sampling on hypergraphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="certified count of independent sets or colourings")
    p.add_argument("kind", choices=("indset", "colouring"))
    p.add_argument("file")
    p.add_argument("--q", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--eps", type=str, help="target relative error, as a decimal or fraction")
    p.add_argument("--s", type=int, help="number of colour classes")
    p.add_argument("--linear", action="store_true", help="use the linear-hypergraph thresholds")
    p.add_argument("--eager", action="store_true", help="resolve every boundary vertex instead of short-circuiting")
    _common(p)
    p.set_defaults(func=cmd_count, text=_count_text)

    p = sub.add_parser("marginal", help="marginal law of a vertex (indset) or a vertex set (colouring)")
    p.add_argument("kind", choices=("indset", "colouring"))
    p.add_argument("file")
    p.add_argument("--vertex", type=int)
    p.add_argument("--set", type=str, help="comma-separated vertices")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--q", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--mode", choices=("derandomised", "montecarlo"), default="derandomised")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10_000)
    _common(p)
    p.set_defaults(func=cmd_marginal, text=_marginal_text)

    p = sub.add_parser("randomscan", help="independent-set marginal under random-scan dynamics")
    p.add_argument("file")
    p.add_argument("--vertex", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--mode", choices=("derandomised", "montecarlo"), default="derandomised")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10_000)
    _common(p)
    p.set_defaults(func=cmd_randomscan, text=_marginal_text)

    p = sub.add_parser("oracle", help="exact brute-force counts and marginals")
    p.add_argument("what", choices=("count", "marginal"))
    p.add_argument("kind", choices=("indset", "colouring", "projected"))
    p.add_argument("file")
    p.add_argument("--q", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--vertex", type=int)
    p.add_argument("--pin", type=str, help="pinning as u=x,u=x (class labels for projected)")
    _common(p, jobs=False)
    p.set_defaults(func=cmd_oracle, text=lambda r: json.dumps(r.get("count", r.get("marginal")), default=str))

    p = sub.add_parser("verify", help="run invariant checks on shipped or given instances")
    p.add_argument("files", nargs="*")
    p.add_argument("--suite", action="append", help="restrict to a suite (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    _common(p, jobs=False)
    p.set_defaults(func=cmd_verify, text=_verify_text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    start = time.perf_counter()
    try:
        report, code = args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EnumerationOverflow, OracleBudgetExceeded) as exc:
        stats = getattr(exc, "stats", {})
        print(f"budget exceeded: {exc} {json.dumps(stats, sort_keys=True, default=str)}", file=sys.stderr)
        return EXIT_OVERFLOW
    elapsed = time.perf_counter() - start
    if args.json:
        if args.timing:
            report["wall_time"] = round(elapsed, 3)
        print(json.dumps(report, sort_keys=True, indent=2, default=str))
    else:
        print(args.text(report))
        log.info("wall time %.3fs", elapsed)
    return code


if __name__ == "__main__":
    sys.exit(main())
