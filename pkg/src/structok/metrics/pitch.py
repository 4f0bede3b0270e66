"""Pitch-class histogram, its entropy, and windowed consistency."""

from __future__ import annotations

import math

import numpy as np

from ..smf import NoteList

SMOOTHING_EPS = 1e-6
DEFAULT_WINDOWS = 10
MAX_ENTROPY = math.log2(12)


class InsufficientContent(ValueError):
    pass


def pitch_class_histogram(notes) -> np.ndarray:
    """Onset-count histogram over the 12 pitch classes, normalized.

    Returns the zero vector for an empty input.
    """
    counts = np.zeros(12)
    for n in notes:
        counts[n.pitch % 12] += 1
    total = counts.sum()
    return counts / total if total else counts


def pitch_class_entropy(p, return_flag: bool = False):
    """Shannon entropy in bits, with 0 log 0 taken as 0.

    With ``return_flag`` also reports whether the histogram was empty.
    """
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    h = float(-(nz * np.log2(nz)).sum()) if nz.size else 0.0
    h = max(0.0, h)
    return (h, not nz.size) if return_flag else h


def kl_divergence(p, q) -> float:
    """KL(p || q) in bits. Both inputs must be strictly positive."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.sum(p * np.log2(p / q)))


def _smooth(h, eps):
    h = h + eps
    return h / h.sum()


def window_histograms(notes: NoteList, windows: int):
    """Per-window pitch-class histograms; ``None`` marks an empty window."""
    length = notes.end_s
    counts = np.zeros((windows, 12))
    for n in notes:
        w = min(windows - 1, int(n.onset_s * windows / length))
        counts[w, n.pitch % 12] += 1
    return [c / c.sum() if c.sum() else None for c in counts]


def pitch_class_consistency(notes: NoteList, windows: int = DEFAULT_WINDOWS,
                            eps: float = SMOOTHING_EPS) -> float:
    """Mean KL divergence between consecutive window histograms.

    The piece is cut into ``windows`` equal-duration windows by note onset;
    empty windows are skipped. Lower values mean a more stable tonality.
    """
    if windows < 2:
        raise ValueError("need at least two windows")
    if not len(notes) or notes.end_s <= 0:
        raise InsufficientContent("piece has no duration")
    hists = [_smooth(h, eps) for h in window_histograms(notes, windows) if h is not None]
    if len(hists) < 2:
        raise InsufficientContent(f"{len(hists)} non-empty window(s)")
    return float(np.mean([kl_divergence(p, q) for p, q in zip(hists, hists[1:])]))
