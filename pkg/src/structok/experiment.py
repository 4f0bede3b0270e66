"""End-to-end representation comparison on one dataset manifest.

For each notation: tokenize the train split, fit the Markov model,
continue primers from the test split, decode, score every piece and
bootstrap the metric means. The two notations are then compared in the
layout of the usual SI / pitch-class / compression tables.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import smf
from .corpus import DatasetManifest
from .generate import HarnessConfig, run_harness, save_model, train_markov
from .metrics import METRICS, MetricConfig, evaluate, reports_to_csv, reports_to_jsonl
from .stats import (DEFAULT_LEVEL, DEFAULT_RESAMPLES, bootstrap_bca, compare_sets)
from .tokenizer import (RepresentationKind, corpus_stats, decode, encode, save_tokens)

log = logging.getLogger(__name__)

KINDS = (RepresentationKind.ONOFF, RepresentationKind.EXPLICIT)
LABELS = {RepresentationKind.ONOFF: "original", RepresentationKind.EXPLICIT: "explicit"}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass
class RunConfig:
    seed: int = 0
    metrics: MetricConfig = field(default_factory=MetricConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    bootstrap_n: int = DEFAULT_RESAMPLES
    level: float = DEFAULT_LEVEL
    order: int = 3
    alpha: float = 0.1

    def as_dict(self) -> dict:
        return {"seed": self.seed, "metrics": self.metrics.as_dict(),
                "harness": asdict(self.harness), "bootstrap_n": self.bootstrap_n,
                "level": self.level, "markov_order": self.order,
                "markov_alpha": self.alpha}


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_notes(paths, errors: list) -> list[tuple[str, smf.NoteList]]:
    out = []
    for p in paths:
        try:
            out.append((str(p), smf.extract_notes(smf.read_midi(p))))
        except (OSError, smf.SmfError) as e:
            errors.append({"path": str(p), "error": str(e)})
    return out


def evaluate_many(named_notes, cfg: MetricConfig, workers: int = 1):
    ids = [n for n, _ in named_notes]
    notes = [x for _, x in named_notes]
    if workers > 1 and len(notes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, notes, [cfg] * len(notes), ids))
    return [evaluate(x, cfg, i) for i, x in zip(ids, notes)]


def _ci(values, cfg: RunConfig, seed):
    vals = [v for v in values if v is not None]
    if len(vals) < 2:
        return None
    return bootstrap_bca(vals, level=cfg.level, resamples=cfg.bootstrap_n, seed=seed)


def _fmt_ci(ci, significant=False):
    if ci is None:
        return "n/a"
    s = f"({ci.low:.2f}, {ci.high:.2f})"
    return s + "*" if significant else s


def _fmt_pct(x, significant=False):
    if x is None:
        return "n/a"
    s = f"{x:.2f}%"
    return s + "*" if significant else s


def _table(header, rows) -> str:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    sep = "-" * len(line(header))
    return "\n".join([line(header), sep] + [line(r) for r in rows])


def format_report(report: dict) -> str:
    name = report["dataset"]
    cmp = {c["metric"]: c for c in report["comparison"]["cells"]}
    real = report["real"]

    def ci(d):
        return None if d is None else type("CI", (), d)

    out = [f"Dataset: {name}", "", "Corpus statistics (tokens)"]
    rows = []
    for kind in ("original", "explicit"):
        st = report["corpus_stats"][kind]
        rows.append([kind, st["total"], st["train"], st["validation"], st["test"],
                     f"{st['avg_length']:.0f}", f"{st['avg_uniques']:.0f}"])
    out.append(_table(["notation", "total", "train", "val", "test", "avg length",
                       "avg uniques"], rows))

    out += ["", "Structureness indicators (95% BCa CI of generated pieces; * = disjoint)"]
    bands = ("si_short", "si_medium", "si_long")
    row = [name]
    for side in ("ci_a", "ci_b"):
        row += [_fmt_ci(ci(cmp[b][side]), cmp[b]["significant"]) for b in bands]
    row += [_fmt_pct(cmp[b]["improvement_pct"], cmp[b]["significant"]) for b in bands]
    hdr = ["dataset"] + [f"{s} {b}" for s in ("orig", "expl", "impr")
                         for b in ("short", "medium", "long")]
    out.append(_table(hdr, [row]))

    out += ["", "Pitch-class entropy and consistency (95% BCa CI)"]
    rows = []
    for metric in ("entropy", "consistency"):
        c = cmp[metric]
        rows.append([metric, name,
                     _fmt_ci(ci(real["original"][metric])),
                     _fmt_ci(ci(c["ci_a"]), c["significant"]),
                     _fmt_ci(ci(real["explicit"][metric])),
                     _fmt_ci(ci(c["ci_b"]), c["significant"])])
    out.append(_table(["metric", "dataset", "orig real", "orig generated",
                       "expl real", "expl generated"], rows))

    out += ["", "Compression ratio (95% BCa CI)"]
    c = cmp["compression_ratio"]
    out.append(_table(["dataset", "original", "explicit"],
                      [[name, _fmt_ci(ci(c["ci_a"]), c["significant"]),
                        _fmt_ci(ci(c["ci_b"]), c["significant"])]]))
    return "\n".join(out) + "\n"


def run_experiment(manifest: DatasetManifest, cfg: RunConfig, out_dir,
                   workers: int = 1) -> dict:
    """Run both notations end to end and write every artifact under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.as_dict(), out / "run_config.json")
    if not manifest.split("train") or not manifest.split("test"):
        raise StageError("manifest", ValueError("need non-empty train and test splits"))

    errors: list = []
    try:
        named = {s: load_notes(manifest.split(s), errors)
                 for s in ("train", "validation", "test")}
    except Exception as e:  # noqa: BLE001 - report stage and re-raise
        raise StageError("load", e) from e

    root = Path(manifest.entries[0].path).parent

    def rel(p):
        try:
            return Path(p).relative_to(root).as_posix()
        except ValueError:
            return str(p)

    report = {"dataset": manifest.name, "config": cfg.as_dict(), "load_errors": errors,
              "corpus_stats": {}, "real": {}, "generated": {}}
    generated_reports = {}
    for kind in KINDS:
        label = LABELS[kind]
        kdir = out / label
        kdir.mkdir(exist_ok=True)
        try:
            seqs = {s: [encode(n, kind, rel(p)) for p, n in named[s]] for s in named}
            all_seqs = [x for s in seqs.values() for x in s]
            st = corpus_stats(all_seqs)
            report["corpus_stats"][label] = {
                "total": len(all_seqs), **{split: len(v) for split, v in seqs.items()},
                "avg_length": st.mean_length, "avg_uniques": st.mean_uniques,
            }
        except Exception as e:  # noqa: BLE001
            raise StageError(f"tokenize/{label}", e) from e
        try:
            log.info("%s: %d train / %d test pieces", label, len(seqs["train"]),
                     len(seqs["test"]))
            model = train_markov(seqs["train"], cfg.order, cfg.alpha)
            save_model(model, kdir / "model.smkv")
        except Exception as e:  # noqa: BLE001
            raise StageError(f"train/{label}", e) from e
        try:
            harness = HarnessConfig(**{**asdict(cfg.harness), "seed": cfg.seed})
            gens = run_harness(model, seqs["test"], harness)
            gdir = kdir / "generated"
            gdir.mkdir(exist_ok=True)
            for i, g in enumerate(gens):
                save_tokens(g, gdir / f"gen_{i:03d}.stok")
        except Exception as e:  # noqa: BLE001
            raise StageError(f"generate/{label}", e) from e
        try:
            log.info("%s: generated %d sequence(s)", label, len(gens))
            gen_notes = [(g.source_id, decode(g)) for g in gens]
            for i, (_, n) in enumerate(gen_notes):
                smf.write_midi(smf.notes_to_document(n), gdir / f"gen_{i:03d}.mid")
            real_notes = [(s.source_id, decode(s)) for s in seqs["test"]]
            gen_reports = evaluate_many(gen_notes, cfg.metrics, workers)
            real_reports = evaluate_many(real_notes, cfg.metrics, workers)
        except Exception as e:  # noqa: BLE001
            raise StageError(f"metrics/{label}", e) from e
        (kdir / "metrics_generated.jsonl").write_text(reports_to_jsonl(gen_reports))
        (kdir / "metrics_generated.csv").write_text(reports_to_csv(gen_reports))
        (kdir / "metrics_real.jsonl").write_text(reports_to_jsonl(real_reports))
        (kdir / "metrics_real.csv").write_text(reports_to_csv(real_reports))
        generated_reports[kind] = gen_reports
        log.info("%s: scored %d generated and %d real piece(s)", label,
                 len(gen_reports), len(real_reports))
        real_ci = {}
        for i, m in enumerate(("entropy", "consistency")):
            c = _ci([getattr(r, m) for r in real_reports], cfg, [cfg.seed, 100 + i])
            real_ci[m] = c.as_dict() if c else None
        report["real"][label] = real_ci
        report["generated"][label] = {"pieces": len(gens),
                                      "tokens_per_piece": harness.total_len}

    try:
        table = compare_sets([r.as_dict() for r in generated_reports[KINDS[0]]],
                             [r.as_dict() for r in generated_reports[KINDS[1]]],
                             METRICS, "original", "explicit", cfg.level,
                             cfg.bootstrap_n, cfg.seed)
    except Exception as e:  # noqa: BLE001
        raise StageError("compare", e) from e
    report["comparison"] = table.as_dict()
    write_json(report, out / "report.json")
    (out / "report.txt").write_text(format_report(report))
    (out / "comparison.csv").write_text(comparison_csv(table))
    return report


def comparison_csv(table) -> str:
    rows = ["metric,status,a_low,a_high,b_low,b_high,improvement_pct,significant"]
    for c in table.cells:
        vals = [c.metric, c.status]
        for ci in (c.ci_a, c.ci_b):
            vals += ["", ""] if ci is None else [repr(ci.low), repr(ci.high)]
        vals.append("" if c.improvement is None else repr(c.improvement))
        vals.append(str(int(c.significant)))
        rows.append(",".join(vals))
    return "\n".join(rows) + "\n"


def all_cells_populated(report: dict) -> bool:
    cells = report["comparison"]["cells"]
    ok = all(c["status"] == "ok" and c["improvement_pct"] is not None for c in cells)
    ok &= {c["metric"] for c in cells} == set(METRICS)
    for label in ("original", "explicit"):
        real = report["real"].get(label, {})
        ok &= all(real.get(m) is not None for m in ("entropy", "consistency"))
    return bool(ok)
