"""Repetition structure: chroma self-similarity and fitness scape plots.

The fitness of a segment measures how much of the piece its repetitions
explain. For every segment an optimal family of non-overlapping alignment
paths is found against the whole piece; the family's accumulated
similarity (score) and the number of frames it spans (coverage) are
normalized so the segment's trivial match with itself counts for nothing,
and fitness is their harmonic mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..smf import NoteList

DEFAULT_FRAME_RATE = 10.0
DEFAULT_SMOOTH_S = 2.0
DEFAULT_KEEP_FRACTION = 0.2
DEFAULT_PENALTY = -2.0
DEFAULT_MAX_FRAMES = 150

SI_BANDS = {
    "short": (3.0, 8.0),
    "medium": (8.0, 15.0),
    "long": (15.0, math.inf),
}


class BandEmpty(ValueError):
    pass


class TooShort(ValueError):
    pass


@dataclass(frozen=True)
class Chromagram:
    frame_rate: float
    frames: np.ndarray  # (n, 12)


@dataclass(frozen=True)
class SSM:
    frame_rate: float
    s: np.ndarray

    @property
    def n(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class ScapePlot:
    """Fitness of every segment; ``fitness[length - 1, start]`` in frames.

    Cells with ``start + length > n`` are unused and hold NaN.
    """

    frame_rate: float
    fitness: np.ndarray

    @property
    def n(self) -> int:
        return self.fitness.shape[0]

    def segments(self):
        """Yield ``(start, length, fitness)`` for every segment, in frames."""
        n = self.n
        for length in range(1, n + 1):
            for start in range(n - length + 1):
                yield start, length, float(self.fitness[length - 1, start])

    def to_csv(self) -> str:
        rows = ["center,length,fitness"]
        r = self.frame_rate
        for start, length, fit in self.segments():
            center = (start + (length - 1) / 2 + 0.5) / r
            rows.append(f"{center:.6g},{length / r:.6g},{fit:.6f}")
        return "\n".join(rows) + "\n"

    def to_pgm(self) -> str:
        """Greyscale P2 image; row = length - 1, column = segment center."""
        n = self.n
        img = np.zeros((n, n), dtype=int)
        for start, length, fit in self.segments():
            img[length - 1, start + (length - 1) // 2] = int(round(fit * 255))
        lines = ["P2", f"{n} {n}", "255"]
        lines += [" ".join(map(str, row)) for row in img]
        return "\n".join(lines) + "\n"


def chromagram(notes: NoteList, frame_rate: float = DEFAULT_FRAME_RATE) -> Chromagram:
    """Per-frame count of sounding notes per pitch class, L2-normalized."""
    if frame_rate <= 0:
        raise ValueError("frame_rate must be positive")
    n = int(math.ceil(notes.end_s * frame_rate - 1e-9))
    frames = np.zeros((n, 12))
    for note in notes:
        f0 = int(math.floor(note.onset_s * frame_rate + 1e-9))
        f1 = int(math.ceil(note.end_s * frame_rate - 1e-9))
        frames[f0:max(f1, f0 + 1), note.pitch % 12] += 1
    norms = np.linalg.norm(frames, axis=1)
    nz = norms > 0
    frames[nz] /= norms[nz, None]
    return Chromagram(frame_rate, frames)


def compute_ssm(c: Chromagram) -> SSM:
    f = c.frames
    s = np.clip(f @ f.T, 0.0, 1.0)
    s = (s + s.T) / 2
    nz = np.linalg.norm(f, axis=1) > 0
    idx = np.flatnonzero(nz)
    s[idx, idx] = 1.0
    return SSM(c.frame_rate, s)


def smooth_diagonals(s: np.ndarray, length: int) -> np.ndarray:
    """Average of forward and backward moving means along every diagonal.

    Windows are truncated at the matrix border rather than zero-padded.
    """
    n = s.shape[0]
    if length <= 1 or n == 0:
        return s.copy()
    pad = np.zeros((n + 2 * length, n + 2 * length))
    pad[length:length + n, length:length + n] = s
    fw = np.zeros_like(s)
    bw = np.zeros_like(s)
    for k in range(length):
        fw += pad[length + k:length + k + n, length + k:length + k + n]
        bw += pad[length - k:length - k + n, length - k:length - k + n]
    i = np.arange(n)
    hi = np.maximum.outer(i, i)
    lo = np.minimum.outer(i, i)
    cnt_fw = np.minimum(length, n - hi)
    cnt_bw = np.minimum(length, lo + 1)
    return (fw / cnt_fw + bw / cnt_bw) / 2


def threshold_ssm(s: np.ndarray, keep_fraction: float = DEFAULT_KEEP_FRACTION,
                  penalty: float = DEFAULT_PENALTY) -> np.ndarray:
    """Keep the top ``keep_fraction`` of positive cells, rescaled to [0, 1].

    Everything else becomes ``penalty``. A constant kept set rescales to 1.
    """
    tau = np.quantile(s, 1.0 - keep_fraction) if s.size else 0.0
    kept = (s >= tau) & (s > 0)
    out = np.full(s.shape, float(penalty))
    if kept.any():
        v = s[kept]
        lo, hi = v.min(), v.max()
        out[kept] = (v - lo) / (hi - lo) if hi > lo else 1.0
    return out


def enhance_ssm(ssm: SSM, smooth_s: float = DEFAULT_SMOOTH_S,
                keep_fraction: float = DEFAULT_KEEP_FRACTION,
                penalty: float = DEFAULT_PENALTY, stride: int = 1) -> SSM:
    """Diagonal smoothing, optional subsampling by ``stride``, thresholding."""
    length = max(1, int(round(smooth_s * ssm.frame_rate)))
    s = smooth_diagonals(ssm.s, length)
    if stride > 1:
        s = s[::stride, ::stride]
    return SSM(ssm.frame_rate / stride, threshold_ssm(s, keep_fraction, penalty))


# ---------------------------------------------------------------------------
# optimal path family

@njit(cache=True)
def _better(s1, c1, l1, s2, c2, l2):
    if s1 != s2:
        return s1 > s2
    if c1 != c2:
        return c1 > c2
    return l1 < l2


@njit(cache=True)
def _family_dp(S, a, M):
    """Best (score, coverage, cell count) for segment columns a..a+M-1.

    Paths run from the segment's first to last column with steps
    (1,1), (2,1), (1,2) in (row, column); successive paths of a family
    occupy strictly increasing, disjoint row ranges.
    """
    N = S.shape[0]
    neg = -np.inf
    ps1 = np.full(M, neg)
    pc1 = np.zeros(M, np.int64)
    pl1 = np.zeros(M, np.int64)
    ps2 = np.full(M, neg)
    pc2 = np.zeros(M, np.int64)
    pl2 = np.zeros(M, np.int64)
    cs = np.full(M, neg)
    cc = np.zeros(M, np.int64)
    cl = np.zeros(M, np.int64)
    es = 0.0
    ec = 0
    el = 0
    for n in range(N):
        if n > 0 and ps1[M - 1] > neg:
            if _better(ps1[M - 1], pc1[M - 1], pl1[M - 1], es, ec, el):
                es = ps1[M - 1]
                ec = pc1[M - 1]
                el = pl1[M - 1]
        cs[0] = es + S[n, a]
        cc[0] = ec + 1
        cl[0] = el + 1
        for m in range(1, M):
            bs = neg
            bc = 0
            bl = 0
            if n >= 1 and ps1[m - 1] > neg:
                bs = ps1[m - 1]
                bc = pc1[m - 1] + 1
                bl = pl1[m - 1] + 1
            if n >= 2 and ps2[m - 1] > neg:
                if bs == neg or _better(ps2[m - 1], pc2[m - 1] + 2, pl2[m - 1] + 1, bs, bc, bl):
                    bs = ps2[m - 1]
                    bc = pc2[m - 1] + 2
                    bl = pl2[m - 1] + 1
            if n >= 1 and m >= 2 and ps1[m - 2] > neg:
                if bs == neg or _better(ps1[m - 2], pc1[m - 2] + 1, pl1[m - 2] + 1, bs, bc, bl):
                    bs = ps1[m - 2]
                    bc = pc1[m - 2] + 1
                    bl = pl1[m - 2] + 1
            if bs == neg:
                cs[m] = neg
            else:
                cs[m] = bs + S[n, a + m]
                cc[m] = bc
                cl[m] = bl
        ps2, pc2, pl2, ps1, pc1, pl1, cs, cc, cl = ps1, pc1, pl1, cs, cc, cl, ps2, pc2, pl2
    if ps1[M - 1] > neg and _better(ps1[M - 1], pc1[M - 1], pl1[M - 1], es, ec, el):
        es = ps1[M - 1]
        ec = pc1[M - 1]
        el = pl1[M - 1]
    return es, ec, el


@njit(cache=True)
def _fitness(score, coverage, length, M, N):
    sn = (score - M) / max(1, length)
    cn = (coverage - M) / N
    if sn < 0.0:
        sn = 0.0
    if cn < 0.0:
        cn = 0.0
    if sn + cn == 0.0:
        return 0.0
    return 2.0 * sn * cn / (sn + cn)


@njit(cache=True)
def _scape(S, stride):
    N = S.shape[0]
    fit = np.full((N, N), np.nan)
    for M in range(1, N + 1):
        if (M - 1) % stride and M != N:
            continue
        for a in range(0, N - M + 1, stride):
            s, c, l = _family_dp(S, a, M)
            fit[M - 1, a] = _fitness(s, c, l, M, N)
    return fit


def path_family_score(s, start: int, end: int) -> tuple[float, int, int]:
    """Optimal path family for segment ``[start, end]`` (inclusive, frames).

    Returns ``(score, coverage, total path length in cells)``.
    """
    s = np.ascontiguousarray(s.s if isinstance(s, SSM) else s, dtype=np.float64)
    if not 0 <= start <= end < s.shape[0]:
        raise ValueError(f"bad segment [{start}, {end}] for n={s.shape[0]}")
    score, cov, length = _family_dp(s, start, end - start + 1)
    return float(score), int(cov), int(length)


def segment_fitness(s, start: int, end: int) -> float:
    s = s.s if isinstance(s, SSM) else s
    score, cov, length = path_family_score(s, start, end)
    return float(_fitness(score, cov, length, end - start + 1, s.shape[0]))


def fitness_scape_plot(ssm: SSM, segment_stride: int = 1) -> ScapePlot:
    """Fitness for all segments of an enhanced SSM.

    ``segment_stride`` > 1 evaluates only every stride-th start and length
    (plus the whole piece); skipped cells stay NaN.
    """
    if ssm.n < 2:
        raise TooShort(f"{ssm.n} frame(s)")
    s = np.ascontiguousarray(ssm.s, dtype=np.float64)
    return ScapePlot(ssm.frame_rate, _scape(s, int(segment_stride)))


def structureness_indicator(plot: ScapePlot, low_s: float, high_s: float = math.inf) -> float:
    """Maximum fitness over segments lasting between ``low_s`` and ``high_s``."""
    if not low_s < high_s:
        raise ValueError("empty band")
    lengths = np.arange(1, plot.n + 1) / plot.frame_rate
    rows = np.flatnonzero((lengths >= low_s - 1e-9) & (lengths < high_s - 1e-9))
    vals = plot.fitness[rows]
    vals = vals[~np.isnan(vals)]
    if not vals.size:
        raise BandEmpty(f"no segment in [{low_s}, {high_s}) s for a "
                        f"{plot.n / plot.frame_rate:.1f} s piece")
    return float(np.clip(vals.max(), 0.0, 1.0))


def decimation_stride(n_frames: int, max_frames: int | None) -> int:
    """Smallest power of two bringing ``n_frames`` down to ``max_frames``."""
    stride = 1
    while max_frames and n_frames > stride * max_frames:
        stride *= 2
    return stride


def scape_plot_for_notes(notes: NoteList, frame_rate: float = DEFAULT_FRAME_RATE,
                         smooth_s: float = DEFAULT_SMOOTH_S,
                         keep_fraction: float = DEFAULT_KEEP_FRACTION,
                         penalty: float = DEFAULT_PENALTY,
                         max_frames: int | None = DEFAULT_MAX_FRAMES) -> ScapePlot:
    """Notes to fitness scape plot.

    Pieces longer than ``max_frames`` frames are subsampled by a power of
    two after diagonal smoothing; ``max_frames=None`` keeps full resolution.
    """
    ssm = compute_ssm(chromagram(notes, frame_rate))
    if ssm.n < 2:
        raise TooShort(f"piece spans {ssm.n} frame(s)")
    stride = decimation_stride(ssm.n, max_frames)
    return fitness_scape_plot(enhance_ssm(ssm, smooth_s, keep_fraction, penalty, stride))


def structureness_indicators(plot: ScapePlot, bands=None) -> dict:
    """SI per named band; ``None`` where the piece is too short for the band."""
    out = {}
    for name, (lo, hi) in (bands or SI_BANDS).items():
        try:
            out[name] = structureness_indicator(plot, lo, hi)
        except BandEmpty:
            out[name] = None
    return out
