"""Per-piece structural metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

from ..smf import NoteList
from .cosiatec import DEFAULT_GRID_S, compression_ratio, point_set
from .pitch import (DEFAULT_WINDOWS, InsufficientContent, pitch_class_consistency,
                    pitch_class_entropy, pitch_class_histogram)
from .structure import (DEFAULT_FRAME_RATE, DEFAULT_KEEP_FRACTION, DEFAULT_MAX_FRAMES,
                        DEFAULT_PENALTY, DEFAULT_SMOOTH_S, SI_BANDS, TooShort,
                        scape_plot_for_notes, structureness_indicators)

METRICS = ("si_short", "si_medium", "si_long", "entropy", "consistency",
           "compression_ratio")


@dataclass(frozen=True)
class MetricConfig:
    frame_rate: float = DEFAULT_FRAME_RATE
    smooth_s: float = DEFAULT_SMOOTH_S
    keep_fraction: float = DEFAULT_KEEP_FRACTION
    penalty: float = DEFAULT_PENALTY
    max_frames: int | None = DEFAULT_MAX_FRAMES
    windows: int = DEFAULT_WINDOWS
    cr_grid_s: float = DEFAULT_GRID_S
    bands: dict = field(default_factory=lambda: dict(SI_BANDS))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["bands"] = {k: [lo, None if math.isinf(hi) else hi]
                      for k, (lo, hi) in self.bands.items()}
        return d


@dataclass
class MetricReport:
    source_id: str
    si_short: float | None = None
    si_medium: float | None = None
    si_long: float | None = None
    entropy: float | None = None
    consistency: float | None = None
    compression_ratio: float | None = None
    notes: int = 0
    anomalies: int = 0
    problems: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__ if k in d})


def evaluate(notes: NoteList, cfg: MetricConfig = MetricConfig(),
             source_id: str = "") -> MetricReport:
    """All four metrics for one piece; unavailable values stay ``None``."""
    rep = MetricReport(source_id, notes=len(notes), anomalies=notes.anomalies)
    if not len(notes):
        rep.problems.append("empty")
        return rep
    rep.entropy = pitch_class_entropy(pitch_class_histogram(notes))
    try:
        rep.consistency = pitch_class_consistency(notes, cfg.windows)
    except InsufficientContent as e:
        rep.problems.append(f"consistency: {e}")
    try:
        plot = scape_plot_for_notes(notes, cfg.frame_rate, cfg.smooth_s,
                                    cfg.keep_fraction, cfg.penalty, cfg.max_frames)
        si = structureness_indicators(plot, cfg.bands)
        rep.si_short, rep.si_medium, rep.si_long = (si.get("short"), si.get("medium"),
                                                    si.get("long"))
        rep.problems += [f"si_{k}: band empty" for k, v in si.items() if v is None]
    except TooShort as e:
        rep.problems.append(f"si: {e}")
    rep.compression_ratio = compression_ratio(point_set(notes, cfg.cr_grid_s))
    return rep


def reports_to_jsonl(reports) -> str:
    return "".join(json.dumps(r.as_dict(), sort_keys=True) + "\n" for r in reports)


def reports_from_jsonl(text: str) -> list[MetricReport]:
    return [MetricReport.from_dict(json.loads(line)) for line in text.splitlines()
            if line.strip()]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("source_id",) + METRICS + ("notes", "anomalies"))
    for r in reports:
        vals = [getattr(r, m) for m in METRICS]
        w.writerow([r.source_id] + ["" if v is None else repr(v) for v in vals]
                   + [r.notes, r.anomalies])
    return buf.getvalue()
