"""Compiled enumerator for the lazy independent-set marginal sampler.

The sampler is re-run once per leaf of its decision tree with a replay tape
(bit ``d`` is the outcome of the ``d``-th fresh lower-bound draw: 0 for spin
0, 1 for BOT).  A run that goes past the end of the tape takes 0 and extends
it; the next tape flips the last 0 to 1.  Recursion is an explicit frame
stack so the whole loop compiles with numba.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

OUT_ZERO, OUT_ONE, OUT_TRUNC = 0, 1, 2
ENTER, SCAN, RES, WAIT = 0, 1, 2, 3


def flatten(h):
    """Per-vertex incident edges as index arrays (others of each edge, in edge order)."""
    edge_ptr = [0]
    oth_ptr = [0]
    oth = []
    for u in range(1, h.n + 1):
        for i in h.incident_edges(u):
            oth.extend(w for w in h.edges[i] if w != u)
            oth_ptr.append(len(oth))
        edge_ptr.append(len(oth_ptr) - 1)
    return (
        np.array(edge_ptr, dtype=np.int64),
        np.array(oth_ptr, dtype=np.int64),
        np.array(oth if oth else [0], dtype=np.int64),
    )


def _run(n, K, t0, edge_ptr, oth_ptr, oth, tape, plen, Mval, Mst, Rval, Rst, epoch, ft, fs, fi, fj):
    """One execution; returns (outcome, fresh draws, tape length used)."""
    nd = 0
    sp = 1
    ft[0] = t0
    fs[0] = ENTER
    ret = -1
    while sp > 0:
        f = sp - 1
        t = ft[f]
        st = fs[f]
        u = t % n + 1
        if st == ENTER:
            if Mst[-t] == epoch:
                ret = Mval[-t]
                sp -= 1
                continue
            if Rst[-t] == epoch:
                r = Rval[-t]
            else:
                if nd >= K:
                    return OUT_TRUNC, nd
                r = tape[nd] if nd < plen else 0
                tape[nd] = r
                nd += 1
                Rval[-t] = r
                Rst[-t] = epoch
            if r == 0:
                Mval[-t] = 0
                Mst[-t] = epoch
                ret = 0
                sp -= 1
                continue
            fi[f] = edge_ptr[u - 1]
            fj[f] = 0
            fs[f] = SCAN
            continue
        e = fi[f]
        if st == SCAN:
            if e == edge_ptr[u]:
                Mval[-t] = 1
                Mst[-t] = epoch
                ret = 1
                sp -= 1
                continue
            j = fj[f]
            if j == oth_ptr[e + 1] - oth_ptr[e]:
                fs[f] = RES
                fj[f] = 0
                continue
            w = oth[oth_ptr[e] + j]
            s = t - (t - w + 1) % n
            if Rst[-s] == epoch:
                r = Rval[-s]
            else:
                if nd >= K:
                    return OUT_TRUNC, nd
                r = tape[nd] if nd < plen else 0
                tape[nd] = r
                nd += 1
                Rval[-s] = r
                Rst[-s] = epoch
            if r == 0:
                fi[f] = e + 1
                fj[f] = 0
            else:
                fj[f] = j + 1
            continue
        if st == RES:
            j = fj[f]
            if j == oth_ptr[e + 1] - oth_ptr[e]:
                Mval[-t] = 0
                Mst[-t] = epoch
                ret = 0
                sp -= 1
                continue
            w = oth[oth_ptr[e] + j]
            fs[f] = WAIT
            ft[sp] = t - (t - w + 1) % n
            fs[sp] = ENTER
            sp += 1
            continue
        # WAIT: a boundary vertex has been resolved into ret
        if ret == 0:
            fi[f] = e + 1
            fj[f] = 0
            fs[f] = SCAN
        else:
            fj[f] += 1
            fs[f] = RES
    return ret, nd


def _drive(n, K, t0, edge_ptr, oth_ptr, oth, tape, state, tally, max_leaves, Mval, Mst, Rval, Rst, ft, fs, fi, fj):
    """Enumerate up to ``max_leaves`` leaves, resuming from ``state = [plen, epoch, done]``."""
    plen = state[0]
    epoch = state[1]
    count = 0
    while count < max_leaves:
        epoch += 1
        out, nd = _run(n, K, t0, edge_ptr, oth_ptr, oth, tape, plen, Mval, Mst, Rval, Rst, epoch, ft, fs, fi, fj)
        tally[out, nd] += 1
        count += 1
        d = nd - 1
        while d >= 0 and tape[d] == 1:
            d -= 1
        if d < 0:
            state[2] = 1
            break
        tape[d] = 1
        plen = d + 1
    state[0] = plen
    state[1] = epoch
    return count


if numba is not None:
    _run = numba.njit(cache=True, nogil=True)(_run)
    _drive = numba.njit(cache=True, nogil=True)(_drive)

AVAILABLE = numba is not None


class Enumerator:
    """Resumable enumeration of the marginal sampler for ``v`` with budget ``K``."""

    def __init__(self, h, v: int, K: int):
        n = h.n
        self.n, self.K = n, K
        self.t0 = 0 - (0 - v + 1) % n
        self.edge_ptr, self.oth_ptr, self.oth = flatten(h)
        span = (K + 3) * n + 2
        self.Mval = np.zeros(span, dtype=np.int8)
        self.Rval = np.zeros(span, dtype=np.int8)
        self.Mst = np.zeros(span, dtype=np.int64)
        self.Rst = np.zeros(span, dtype=np.int64)
        self.ft = np.zeros(K + 2, dtype=np.int64)
        self.fs = np.zeros(K + 2, dtype=np.int64)
        self.fi = np.zeros(K + 2, dtype=np.int64)
        self.fj = np.zeros(K + 2, dtype=np.int64)
        self.tape = np.zeros(K + 1, dtype=np.int8)
        self.state = np.zeros(3, dtype=np.int64)
        self.tally = np.zeros((3, K + 1), dtype=np.int64)

    @property
    def done(self) -> bool:
        return bool(self.state[2])

    @property
    def leaves(self) -> int:
        return int(self.tally.sum())

    def step(self, max_leaves: int) -> int:
        return _drive(
            self.n, self.K, self.t0, self.edge_ptr, self.oth_ptr, self.oth, self.tape, self.state,
            self.tally, max_leaves, self.Mval, self.Mst, self.Rval, self.Rst, self.ft, self.fs, self.fi, self.fj,
        )
