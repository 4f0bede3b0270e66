"""Point-set compression by translational equivalence classes.

A piece becomes a set of (time step, pitch) points. SIATEC finds every
maximal translatable pattern (MTP) from the table of inter-point difference
vectors, together with all vectors translating it into the set (its TEC).
COSIATEC greedily keeps the best-compressing TEC, deletes the points it
covers and repeats; whatever is left is encoded point by point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..smf import NoteList

DEFAULT_GRID_S = 0.05

Point = tuple[int, int]


@dataclass(frozen=True)
class TEC:
    pattern: tuple[Point, ...]
    translators: tuple[Point, ...]  # always contains (0, 0)

    @property
    def encoding_size(self) -> int:
        return len(self.pattern) + len(self.translators) - 1

    @property
    def covered(self) -> frozenset:
        return frozenset((t + dt, p + dp) for t, p in self.pattern
                         for dt, dp in self.translators)

    @property
    def compression_ratio(self) -> float:
        return len(self.covered) / self.encoding_size


def point_set(notes: NoteList, grid_s: float = DEFAULT_GRID_S) -> frozenset:
    """Deduplicated (onset step, pitch) points."""
    if grid_s <= 0:
        raise ValueError("grid_s must be positive")
    return frozenset((int(np.floor(n.onset_s / grid_s + 0.5)), n.pitch) for n in notes)


def _as_array(points) -> np.ndarray:
    arr = np.array(sorted(set(map(tuple, points))), dtype=np.int64).reshape(-1, 2)
    return arr


def _mtp_groups(pts: np.ndarray):
    """Group forward difference vectors; yields index arrays of size >= 2.

    Returns ``(order, starts, ends)`` over the pair table where
    ``pair_i[order[starts[g]:ends[g]]]`` is the g-th MTP.
    """
    n = len(pts)
    i, j = np.triu_indices(n, 1)
    dt = pts[j, 0] - pts[i, 0]
    dp = pts[j, 1] - pts[i, 1]
    key = dt * 512 + (dp + 256)
    order = np.argsort(key, kind="stable")
    sk = key[order]
    bounds = np.flatnonzero(np.diff(sk)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [len(sk)]))
    big = (ends - starts) >= 2
    return i[order], starts[big], ends[big]


@njit(cache=True)
def _score_groups(pts, pair_i, starts, ends, t0, tspan):
    """Coverage, translator count and bounding-box extents for every MTP."""
    n = pts.shape[0]
    occ = np.zeros((tspan, 128), np.bool_)
    for k in range(n):
        occ[pts[k, 0] - t0, pts[k, 1]] = True
    stamp = np.zeros((tspan, 128), np.int64)
    g_count = starts.shape[0]
    cov = np.zeros(g_count, np.int64)
    ntr = np.zeros(g_count, np.int64)
    span_t = np.zeros(g_count, np.int64)
    span_p = np.zeros(g_count, np.int64)
    for g in range(g_count):
        s = starts[g]
        m = ends[g] - s
        base = pair_i[s]
        bt = pts[base, 0]
        bp = pts[base, 1]
        tmin = bt
        tmax = bt
        pmin = bp
        pmax = bp
        for r in range(1, m):
            q = pair_i[s + r]
            tmin = min(tmin, pts[q, 0])
            tmax = max(tmax, pts[q, 0])
            pmin = min(pmin, pts[q, 1])
            pmax = max(pmax, pts[q, 1])
        span_t[g] = tmax - tmin
        span_p[g] = pmax - pmin
        c = 0
        tcount = 0
        for k in range(n):
            vt = pts[k, 0] - bt
            vp = pts[k, 1] - bp
            ok = True
            for r in range(1, m):
                q = pair_i[s + r]
                tt = pts[q, 0] + vt - t0
                pp = pts[q, 1] + vp
                if tt < 0 or tt >= tspan or pp < 0 or pp > 127 or not occ[tt, pp]:
                    ok = False
                    break
            if ok:
                tcount += 1
                for r in range(m):
                    q = pair_i[s + r]
                    tt = pts[q, 0] + vt - t0
                    pp = pts[q, 1] + vp
                    if stamp[tt, pp] != g + 1:
                        stamp[tt, pp] = g + 1
                        c += 1
        cov[g] = c
        ntr[g] = tcount
    return cov, ntr, span_t, span_p


def translators(pattern, points) -> tuple[Point, ...]:
    """All vectors mapping ``pattern`` into ``points``, sorted."""
    pts = set(points)
    pattern = sorted(pattern)
    b = pattern[0]
    out = []
    for q in sorted(pts):
        v = (q[0] - b[0], q[1] - b[1])
        if all((t + v[0], p + v[1]) in pts for t, p in pattern):
            out.append(v)
    return tuple(out)


def _tec_key(tec: TEC):
    return (-tec.compression_ratio, -len(tec.covered), _bbox(tec.pattern), tec.pattern)


def _bbox(pattern):
    """Bounding-box extents, time first: shorter patterns are preferred."""
    ts = [t for t, _ in pattern]
    ps = [p for _, p in pattern]
    return (max(ts) - min(ts), max(ps) - min(ps))


def siatec(points) -> list[TEC]:
    """TECs of all MTPs with at least two points, deduplicated."""
    pts = _as_array(points)
    if len(pts) < 2:
        return []
    pair_i, starts, ends = _mtp_groups(pts)
    seen = {}
    for s, e in zip(starts, ends):
        pattern = tuple(map(tuple, pts[pair_i[s:e]].tolist()))
        if pattern not in seen:
            seen[pattern] = TEC(pattern, translators(pattern, map(tuple, pts.tolist())))
    return list(seen.values())


def best_tec(points) -> TEC | None:
    """The best-compressing TEC of one SIATEC pass, or None if nothing repeats.

    Ranked by compression ratio, then coverage, then smaller bounding box
    (time extent, then pitch extent), then the lexicographically smaller
    pattern.
    """
    pts = _as_array(points)
    if len(pts) < 2:
        return None
    pair_i, starts, ends = _mtp_groups(pts)
    if not len(starts):
        return None
    t0 = int(pts[:, 0].min())
    tspan = int(pts[:, 0].max()) - t0 + 1
    cov, ntr, span_t, span_p = _score_groups(pts, pair_i, starts, ends, t0, tspan)
    cr = cov / (ends - starts + ntr - 1)
    top = cr == cr.max()
    top &= cov == cov[top].max()
    top &= span_t == span_t[top].min()
    top &= span_p == span_p[top].min()
    cands = set()
    for g in np.flatnonzero(top):
        cands.add(tuple(map(tuple, pts[pair_i[starts[g]:ends[g]]].tolist())))
    pattern = min(cands)
    return TEC(pattern, translators(pattern, map(tuple, pts.tolist())))


def cosiatec(points) -> list[TEC]:
    """Greedy TEC cover of ``points``; every point is covered exactly once."""
    remaining = set(map(tuple, points))
    if not remaining:
        raise ValueError("empty point set")
    out = []
    while len(remaining) > 1:
        tec = best_tec(remaining)
        if tec is None or tec.compression_ratio <= 1:
            break
        covered = tec.covered
        out.append(tec)
        remaining -= covered
    out.extend(TEC((p,), ((0, 0),)) for p in sorted(remaining))
    return out


def compression_ratio(points, tecs: list[TEC] | None = None) -> float:
    points = set(map(tuple, points))
    if not points:
        raise ValueError("empty point set")
    if tecs is None:
        tecs = cosiatec(points)
    return len(points) / sum(t.encoding_size for t in tecs)
