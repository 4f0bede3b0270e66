"""BCa bootstrap intervals, Mann-Whitney U tests and set comparisons."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

DEFAULT_RESAMPLES = 9999
DEFAULT_LEVEL = 0.95
EXACT_MAX_N = 12

_NORM = NormalDist()


class Undefined(ValueError):
    pass


@dataclass(frozen=True)
class IntervalEstimate:
    low: float
    high: float
    level: float = DEFAULT_LEVEL
    resamples: int = DEFAULT_RESAMPLES
    method: str = "BCa"
    estimate: float = math.nan

    def contains(self, x: float) -> bool:
        return self.low <= x <= self.high

    def disjoint(self, other: "IntervalEstimate") -> bool:
        return self.high < other.low or other.high < self.low

    def as_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "level": self.level,
                "resamples": self.resamples, "method": self.method,
                "estimate": self.estimate}


@dataclass(frozen=True)
class TestResult:
    u_statistic: float
    z: float
    p_value: float
    exact: bool = False
    n1: int = 0
    n2: int = 0

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05

    def as_dict(self) -> dict:
        return {"U": self.u_statistic, "z": self.z, "p": self.p_value,
                "exact": self.exact, "significant": self.significant}


def _check_finite(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    return x


# ---------------------------------------------------------------------------
# BCa bootstrap

def jackknife_acceleration(x: np.ndarray, statistic=np.mean) -> float:
    n = len(x)
    jack = np.array([statistic(np.delete(x, i)) for i in range(n)])
    d = jack.mean() - jack
    denom = 6.0 * (d ** 2).sum() ** 1.5
    return float((d ** 3).sum() / denom) if denom > 0 else 0.0


def bias_correction(boot: np.ndarray, theta_hat: float) -> float:
    """z0 from the share of bootstrap replicates below the estimate.

    Ties count one half; the share is kept inside (0, 1).
    """
    b = len(boot)
    share = (np.sum(boot < theta_hat) + 0.5 * np.sum(boot == theta_hat)) / b
    share = min(max(share, 0.5 / b), 1 - 0.5 / b)
    return _NORM.inv_cdf(share)


def bca_levels(z0: float, a: float, level: float) -> tuple[float, float]:
    """Adjusted lower/upper percentile levels."""
    out = []
    for tail in ((1 - level) / 2, (1 + level) / 2):
        z = _NORM.inv_cdf(tail)
        denom = 1 - a * (z0 + z)
        out.append(_NORM.cdf(z0 + (z0 + z) / denom) if denom > 0 else (0.0 if tail < 0.5 else 1.0))
    return out[0], out[1]


def order_statistic(sorted_values: np.ndarray, alpha: float) -> float:
    """Nearest-rank quantile of an already sorted array."""
    b = len(sorted_values)
    k = min(b, max(1, math.ceil(alpha * b)))
    return float(sorted_values[k - 1])


def bootstrap_replicates(x, resamples: int, seed, statistic=np.mean) -> np.ndarray:
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(x), size=(resamples, len(x)))
    if statistic is np.mean:
        return x[idx].mean(axis=1)
    return np.array([statistic(x[row]) for row in idx])


def bootstrap_bca(values: Sequence[float], statistic: Callable = np.mean,
                  level: float = DEFAULT_LEVEL, resamples: int = DEFAULT_RESAMPLES,
                  seed=0) -> IntervalEstimate:
    """Bias-corrected and accelerated bootstrap confidence interval."""
    x = _check_finite(values)
    if len(x) < 2:
        raise ValueError("BCa needs at least two values")
    theta = float(statistic(x))
    if np.all(x == x[0]):
        return IntervalEstimate(float(x[0]), float(x[0]), level, resamples, "BCa", theta)
    boot = bootstrap_replicates(x, resamples, seed, statistic)
    z0 = bias_correction(boot, theta)
    a = jackknife_acceleration(x, statistic)
    a1, a2 = bca_levels(z0, a, level)
    boot.sort()
    return IntervalEstimate(order_statistic(boot, a1), order_statistic(boot, a2),
                            level, resamples, "BCa", theta)


def percentile_interval(boot_sorted: np.ndarray, level: float = DEFAULT_LEVEL):
    return (order_statistic(boot_sorted, (1 - level) / 2),
            order_statistic(boot_sorted, (1 + level) / 2))


# ---------------------------------------------------------------------------
# Mann-Whitney U

def midranks(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _exact_p(u: float, n1: int, n2: int) -> float:
    n = n1 + n2
    total = 0
    low = high = 0
    base = n1 * (n1 + 1) / 2
    for combo in itertools.combinations(range(1, n + 1), n1):
        uc = sum(combo) - base
        total += 1
        low += uc <= u
        high += uc >= u
    return min(1.0, 2 * min(low, high) / total)


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Mann-Whitney U test.

    Exact null distribution for small tie-free samples, otherwise a normal
    approximation with tie-corrected variance and continuity correction.
    ``u_statistic`` is U for the first sample.
    """
    a = _check_finite(a)
    b = _check_finite(b)
    n1, n2 = len(a), len(b)
    if not n1 or not n2:
        raise ValueError("both samples need at least one value")
    ranks = midranks(np.concatenate([a, b]))
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    n = n1 + n2
    mu = n1 * n2 / 2
    _, counts = np.unique(np.concatenate([a, b]), return_counts=True)
    ties = float(np.sum(counts ** 3 - counts))
    var = n1 * n2 / 12 * ((n + 1) - ties / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return TestResult(u1, 0.0, 1.0, False, n1, n2)
    z = (abs(u1 - mu) - 0.5) / math.sqrt(var)
    z = max(z, 0.0)
    if n <= EXACT_MAX_N and ties == 0:
        return TestResult(u1, z, _exact_p(u1, n1, n2), True, n1, n2)
    p = min(1.0, 2 * (1 - _NORM.cdf(z)))
    return TestResult(u1, z, p, False, n1, n2)


# ---------------------------------------------------------------------------
# comparisons

def improvement_pct(original: Sequence[float], explicit: Sequence[float]) -> float:
    m0 = float(np.mean(original))
    if m0 == 0:
        raise Undefined("original mean is zero")
    return 100.0 * (float(np.mean(explicit)) - m0) / m0


@dataclass
class ComparisonCell:
    metric: str
    status: str  # ok | insufficient | missing
    n_a: int = 0
    n_b: int = 0
    ci_a: IntervalEstimate | None = None
    ci_b: IntervalEstimate | None = None
    improvement: float | None = None
    significant: bool = False

    def as_dict(self) -> dict:
        return {
            "metric": self.metric, "status": self.status,
            "n_a": self.n_a, "n_b": self.n_b,
            "ci_a": self.ci_a.as_dict() if self.ci_a else None,
            "ci_b": self.ci_b.as_dict() if self.ci_b else None,
            "improvement_pct": self.improvement,
            "significant": self.significant,
        }


@dataclass
class ComparisonTable:
    label_a: str
    label_b: str
    cells: list[ComparisonCell] = field(default_factory=list)

    def cell(self, metric: str) -> ComparisonCell:
        for c in self.cells:
            if c.metric == metric:
                return c
        raise KeyError(metric)

    def as_dict(self) -> dict:
        return {"a": self.label_a, "b": self.label_b,
                "cells": [c.as_dict() for c in self.cells]}


def compare_samples(metric: str, a: Sequence[float], b: Sequence[float],
                    level: float = DEFAULT_LEVEL, resamples: int = DEFAULT_RESAMPLES,
                    seed=0) -> ComparisonCell:
    a = [v for v in a if v is not None]
    b = [v for v in b if v is not None]
    cell = ComparisonCell(metric, "ok", len(a), len(b))
    if not a or not b:
        cell.status = "missing"
        return cell
    if len(a) < 2 or len(b) < 2:
        cell.status = "insufficient"
        return cell
    cell.ci_a = bootstrap_bca(a, level=level, resamples=resamples, seed=seed)
    cell.ci_b = bootstrap_bca(b, level=level, resamples=resamples, seed=seed)
    try:
        cell.improvement = improvement_pct(a, b)
    except Undefined:
        cell.improvement = None
    cell.significant = cell.ci_a.disjoint(cell.ci_b)
    return cell


def compare_sets(reports_a, reports_b, metrics: Sequence[str], label_a="original",
                 label_b="explicit", level: float = DEFAULT_LEVEL,
                 resamples: int = DEFAULT_RESAMPLES, seed=0) -> ComparisonTable:
    """Per-metric BCa intervals for two report sets, flagged where disjoint.

    Reports are mappings (or objects with ``as_dict``) from metric name to
    value; ``None`` marks an unavailable value.
    """
    if not reports_a or not reports_b:
        raise ValueError("both report sets must be non-empty")

    def column(reports, m):
        out = []
        for r in reports:
            d = r if isinstance(r, dict) else r.as_dict()
            out.append(d.get(m))
        return out

    table = ComparisonTable(label_a, label_b)
    for i, m in enumerate(metrics):
        table.cells.append(compare_samples(m, column(reports_a, m), column(reports_b, m),
                                           level, resamples, seed=[seed, i]))
    return table
