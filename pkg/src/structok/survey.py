"""Listening-study analysis: Likert means per notation and U tests per question.

Input CSV columns: ``dataset, notation, O, I, S, R`` with integer scores 1..5.
``notation`` is ``original`` (alias ``onoff``) or ``explicit`` (alias
``duration``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .stats import mann_whitney_u

QUESTIONS = ("O", "I", "S", "R")
NOTATIONS = ("original", "explicit")
_ALIASES = {"original": "original", "onoff": "original",
            "explicit": "explicit", "duration": "explicit"}
OVERALL = "Average"


@dataclass(frozen=True)
class Response:
    line: int
    dataset: str
    notation: str
    scores: tuple[int, int, int, int]


@dataclass
class SurveyData:
    responses: list[Response] = field(default_factory=list)
    malformed: list[tuple[int, str]] = field(default_factory=list)


def parse_survey(text: str) -> SurveyData:
    """Parse CSV text; bad rows are kept aside as ``(line, reason)``."""
    out = SurveyData()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValueError("survey CSV is empty") from None
    need = ("dataset", "notation") + QUESTIONS
    missing = [c for c in need if c not in header]
    if missing:
        raise ValueError(f"survey CSV lacks column(s): {', '.join(missing)}")
    col = {c: header.index(c) for c in need}
    for row in reader:
        line = reader.line_num
        if not any(c.strip() for c in row):
            continue
        if len(row) < len(header):
            out.malformed.append((line, f"expected {len(header)} fields, got {len(row)}"))
            continue
        notation = _ALIASES.get(row[col["notation"]].strip().lower())
        if notation is None:
            out.malformed.append((line, f"unknown notation {row[col['notation']]!r}"))
            continue
        try:
            scores = tuple(int(row[col[q]]) for q in QUESTIONS)
        except ValueError:
            out.malformed.append((line, "non-integer score"))
            continue
        if not all(1 <= s <= 5 for s in scores):
            out.malformed.append((line, "score outside 1..5"))
            continue
        out.responses.append(Response(line, row[col["dataset"]].strip(), notation, scores))
    return out


def _cell(a: list[int], b: list[int]) -> dict:
    cell = {"mean_original": float(np.mean(a)) if a else None,
            "mean_explicit": float(np.mean(b)) if b else None,
            "n_original": len(a), "n_explicit": len(b),
            "p": None, "exact": None, "significant": False, "status": "ok"}
    if len(a) < 2 or len(b) < 2:
        cell["status"] = "insufficient"
        return cell
    res = mann_whitney_u(a, b)
    cell.update(p=res.p_value, exact=res.exact, significant=res.significant)
    return cell


def analyze_survey(data: SurveyData) -> dict:
    """Per dataset plus pooled ``Average`` row; one U test per question."""
    datasets = sorted({r.dataset for r in data.responses})
    rows = {}
    for name in datasets + [OVERALL]:
        rs = [r for r in data.responses if name == OVERALL or r.dataset == name]
        rows[name] = {}
        for qi, q in enumerate(QUESTIONS):
            a = [r.scores[qi] for r in rs if r.notation == "original"]
            b = [r.scores[qi] for r in rs if r.notation == "explicit"]
            rows[name][q] = _cell(a, b)
    return {"rows": rows, "order": datasets + [OVERALL],
            "malformed": [{"line": ln, "reason": why} for ln, why in data.malformed],
            "responses": len(data.responses)}


def format_survey(report: dict) -> str:
    """Text table; ``*`` marks p < 0.05, ``?`` an untestable cell."""

    def fmt(cell, side):
        m = cell[f"mean_{side}"]
        if m is None:
            return "n/a"
        mark = "*" if cell["significant"] else ("?" if cell["status"] != "ok" else "")
        return f"{m:.2f}{mark}"

    header = ["dataset"] + [f"orig {q}" for q in QUESTIONS] + [f"expl {q}" for q in QUESTIONS]
    body = []
    for name in report["order"]:
        row = report["rows"][name]
        body.append([name] + [fmt(row[q], "original") for q in QUESTIONS]
                    + [fmt(row[q], "explicit") for q in QUESTIONS])
    prow = ["p (U test)"]
    for q in QUESTIONS:
        p = report["rows"][OVERALL][q]["p"]
        prow.append("n/a" if p is None else f"{p:.4f}")
    body.append(prow + [""] * len(QUESTIONS))
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    out = [line(header), "-" * len(line(header))] + [line(r) for r in body]
    for m in report["malformed"]:
        out.append(f"malformed line {m['line']}: {m['reason']}")
    return "\n".join(out) + "\n"


def survey_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "question", "mean_original", "mean_explicit", "n_original",
                "n_explicit", "p", "significant", "status"])
    for name in report["order"]:
        for q in QUESTIONS:
            c = report["rows"][name][q]
            w.writerow([name, q] + ["" if c[k] is None else repr(c[k]) for k in
                                    ("mean_original", "mean_explicit")]
                       + [c["n_original"], c["n_explicit"],
                          "" if c["p"] is None else repr(c["p"]),
                          int(c["significant"]), c["status"]])
    return buf.getvalue()
