"""``structok`` command line.

Every command is deterministic for fixed inputs, flags and seed. Commands
that write into an output directory also drop a ``run_config.json`` there;
wall-clock timestamps go only to ``run.log``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__, smf
from .corpus import default_corpus_dir, discover_midi, load_manifest, make_mini_corpus
from .experiment import RunConfig, StageError, evaluate_many, format_report, run_experiment, write_json
from .generate import HarnessConfig, load_model, run_harness, save_model, train_markov
from .metrics import METRICS, MetricConfig, reports_from_jsonl, reports_to_csv, reports_to_jsonl
from .metrics.structure import SI_BANDS, TooShort, scape_plot_for_notes
from .stats import compare_sets
from .survey import analyze_survey, format_survey, parse_survey, survey_csv
from .tokenizer import (EmptyCorpus, RepresentationKind, corpus_stats, decode, encode,
                        load_tokens, save_tokens)

log = logging.getLogger("structok")

TOKEN_EXT = {"binary": ".stok", "text": ".txt"}


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("STRUCTOK_SEED")
    return int(env) if env else 0


def _bands(spec: str | None) -> dict:
    """``3,8,15`` -> short/medium/long bands."""
    if not spec:
        return dict(SI_BANDS)
    lo, mid, hi = (float(x) for x in spec.split(","))
    if not 0 < lo < mid < hi:
        raise ValueError("--bands needs three increasing positive numbers")
    return {"short": (lo, mid), "medium": (mid, hi), "long": (hi, float("inf"))}


def _metric_cfg(args) -> MetricConfig:
    return MetricConfig(frame_rate=args.frame_rate, windows=args.windows,
                        bands=_bands(args.bands),
                        max_frames=None if args.max_frames == 0 else args.max_frames)


def _run_config(args) -> RunConfig:
    harness = HarnessConfig(primer_len=args.primer_len, total_len=args.total_len,
                            continuations_per_primer=args.continuations,
                            primers_per_dataset=args.primers,
                            temperature=args.temperature, seed=_seed(args))
    return RunConfig(seed=_seed(args), metrics=_metric_cfg(args), harness=harness,
                     bootstrap_n=args.bootstrap_n, level=args.level,
                     order=args.order, alpha=args.alpha)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _flat_name(path: Path, roots: list[Path]) -> str:
    for r in roots:
        if r.is_dir():
            try:
                return path.relative_to(r).with_suffix("").as_posix().replace("/", "__")
            except ValueError:
                pass
    return path.stem


def _read_notes(path) -> smf.NoteList:
    """MIDI file or token file to notes."""
    p = Path(path)
    if p.suffix.lower() in (".mid", ".midi"):
        return smf.extract_notes(smf.read_midi(p))
    return decode(load_tokens(p, None))


# ---------------------------------------------------------------------------
# commands

def cmd_inspect(args) -> int:
    doc = smf.read_midi(args.midi)
    info = smf.describe(doc)
    if args.notes:
        info["note_list"] = [[n.onset_s, n.duration_s, n.pitch, n.velocity]
                             for n in smf.extract_notes(doc)]
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


def cmd_tokenize(args) -> int:
    kind = RepresentationKind.parse(args.kind)
    roots = [Path(p) for p in args.inputs]
    files = discover_midi(roots)
    out = _out_dir(args)
    write_json({"command": "tokenize", "kind": kind.value, "format": args.format},
               out / "run_config.json")
    summary = {"kind": kind.value, "files": [], "errors": []}
    seqs = []
    used = set()
    for f in files:
        try:
            notes = smf.extract_notes(smf.read_midi(f))
        except (OSError, smf.SmfError) as e:
            summary["errors"].append({"path": str(f), "error": str(e)})
            log.error("%s: %s", f, e)
            continue
        name = _flat_name(f, roots)
        while name in used:
            name += "_"
        used.add(name)
        seq = encode(notes, kind, str(f))
        seqs.append(seq)
        target = out / (name + TOKEN_EXT[args.format])
        save_tokens(seq, target, args.format)
        summary["files"].append({"path": str(f), "tokens": str(target.name),
                                 "length": len(seq.ids), "uniques": len(set(seq.ids)),
                                 "notes": len(notes), "anomalies": notes.anomalies})
    if seqs:
        summary["stats"] = corpus_stats(seqs).as_dict()
    write_json(summary, out / "summary.json")
    print(f"tokenized {len(seqs)} file(s), {len(summary['errors'])} error(s)")
    return 0 if seqs else 1


def cmd_detokenize(args) -> int:
    seq = load_tokens(args.tokens, args.kind)
    notes = decode(seq)
    smf.write_midi(smf.notes_to_document(notes), args.out)
    print(f"wrote {len(notes)} note(s), {notes.anomalies} anomaly(ies) to {args.out}")
    return 0


def stats_report(manifest, kinds) -> dict:
    named = {}
    missing = []
    for e in manifest.entries:
        try:
            named.setdefault(e.split, []).append(smf.extract_notes(smf.read_midi(e.path)))
        except (OSError, smf.SmfError) as err:
            missing.append({"path": str(e.path), "error": str(err)})
    if not named:
        raise EmptyCorpus("no readable files in manifest")
    rows = {}
    for kind in kinds:
        seqs = {s: [encode(n, kind) for n in ns] for s, ns in named.items()}
        every = [x for v in seqs.values() for x in v]
        st = corpus_stats(every)
        rows[kind.value] = {"total": len(every),
                            **{s: len(seqs.get(s, [])) for s in ("train", "validation", "test")},
                            "avg_length": st.mean_length, "avg_uniques": st.mean_uniques}
    return {"dataset": manifest.name, "rows": rows, "missing": missing}


def format_stats(rep: dict) -> str:
    head = ["dataset", "notation", "total", "train", "val", "test", "avg length", "avg uniques"]
    body = [[rep["dataset"], k, str(r["total"]), str(r["train"]), str(r["validation"]),
             str(r["test"]), f"{r['avg_length']:.1f}", f"{r['avg_uniques']:.1f}"]
            for k, r in rep["rows"].items()]
    widths = [max(len(x[i]) for x in [head] + body) for i in range(len(head))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    out = [line(head), "-" * len(line(head))] + [line(r) for r in body]
    out += [f"missing: {m['path']} ({m['error']})" for m in rep["missing"]]
    return "\n".join(out) + "\n"


def cmd_stats(args) -> int:
    manifest = load_manifest(args.manifest)
    kinds = ([RepresentationKind.ONOFF, RepresentationKind.EXPLICIT] if args.kind == "both"
             else [RepresentationKind.parse(args.kind)])
    rep = stats_report(manifest, kinds)
    if args.out:
        out = _out_dir(args)
        write_json({"command": "stats", "kinds": [k.value for k in kinds]},
                   out / "run_config.json")
        write_json(rep, out / "stats.json")
        (out / "stats.txt").write_text(format_stats(rep))
    if args.format == "json":
        print(json.dumps(rep, indent=2, sort_keys=True))
    else:
        sys.stdout.write(format_stats(rep))
    return 0


def _split_seqs(manifest, split, kind):
    root = Path(manifest.entries[0].path).parent
    out = []
    for p in manifest.split(split):
        try:
            notes = smf.extract_notes(smf.read_midi(p))
        except (OSError, smf.SmfError) as e:
            log.error("%s: %s", p, e)
            continue
        try:
            sid = Path(p).relative_to(root).as_posix()
        except ValueError:
            sid = str(p)
        out.append(encode(notes, kind, sid))
    return out


def cmd_train(args) -> int:
    kind = RepresentationKind.parse(args.kind)
    seqs = _split_seqs(load_manifest(args.manifest), "train", kind)
    model = train_markov(seqs, args.order, args.alpha)
    save_model(model, args.out)
    print(f"trained order-{model.order} model on {len(seqs)} piece(s), "
          f"{len(model.counts)} context(s) -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    model = load_model(args.model)
    cfg = _run_config(args)
    seqs = _split_seqs(load_manifest(args.manifest), "test", model.kind)
    out = _out_dir(args)
    write_json({**cfg.as_dict(), "command": "generate", "kind": model.kind.value},
               out / "run_config.json")
    gens = run_harness(model, seqs, cfg.harness)
    for i, g in enumerate(gens):
        save_tokens(g, out / f"gen_{i:03d}{TOKEN_EXT[args.format]}", args.format)
        smf.write_midi(smf.notes_to_document(decode(g)), out / f"gen_{i:03d}.mid")
    write_json([{"index": i, "source": g.source_id, **g.meta} for i, g in enumerate(gens)],
               out / "generated.json")
    print(f"generated {len(gens)} sequence(s) of {cfg.harness.total_len} tokens")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _metric_cfg(args)
    files = []
    for p in map(Path, args.inputs):
        files += (sorted(q for q in p.rglob("*") if q.suffix.lower() in
                         (".mid", ".midi", ".stok")) if p.is_dir() else [p])
    named, errors = [], []
    for f in files:
        try:
            named.append((str(f), _read_notes(f)))
        except (OSError, ValueError) as e:
            errors.append(f"{f}: {e}")
            log.error("%s: %s", f, e)
    if not named:
        print("error: no readable inputs", file=sys.stderr)
        return 1
    reports = evaluate_many(named, cfg, args.workers)
    text = reports_to_csv(reports) if args.format == "csv" else reports_to_jsonl(reports)
    if args.out:
        out = _out_dir(args)
        write_json({"command": "evaluate", "metrics": cfg.as_dict()}, out / "run_config.json")
        (out / "metrics.jsonl").write_text(reports_to_jsonl(reports))
        (out / "metrics.csv").write_text(reports_to_csv(reports))
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    a = reports_from_jsonl(Path(args.a).read_text())
    b = reports_from_jsonl(Path(args.b).read_text())
    table = compare_sets(a, b, METRICS, args.label_a, args.label_b, args.level,
                         args.bootstrap_n, _seed(args))
    d = table.as_dict()
    lines = [f"{'metric':<18} {args.label_a:<20} {args.label_b:<20} improvement"]
    for c in table.cells:
        fmt = lambda ci: "n/a" if ci is None else f"({ci.low:.3f}, {ci.high:.3f})"
        mark = "*" if c.significant else ""
        imp = "n/a" if c.improvement is None else f"{c.improvement:.2f}%{mark}"
        lines.append(f"{c.metric:<18} {fmt(c.ci_a) + mark:<20} {fmt(c.ci_b) + mark:<20} {imp}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = _out_dir(args)
        write_json({"command": "compare", "seed": _seed(args), "level": args.level,
                    "bootstrap_n": args.bootstrap_n}, out / "run_config.json")
        write_json(d, out / "comparison.json")
        (out / "comparison.txt").write_text(text)
    sys.stdout.write(json.dumps(d, indent=2, sort_keys=True) + "\n"
                     if args.format == "json" else text)
    return 0


def cmd_survey(args) -> int:
    data = parse_survey(Path(args.csv).read_text(encoding="utf-8"))
    rep = analyze_survey(data)
    for m in rep["malformed"]:
        print(f"warning: line {m['line']}: {m['reason']}", file=sys.stderr)
    if args.out:
        out = _out_dir(args)
        write_json({"command": "survey"}, out / "run_config.json")
        write_json(rep, out / "survey.json")
        (out / "survey.csv").write_text(survey_csv(rep))
        (out / "survey.txt").write_text(format_survey(rep))
    if args.format == "json":
        print(json.dumps(rep, indent=2, sort_keys=True))
    elif args.format == "csv":
        sys.stdout.write(survey_csv(rep))
    else:
        sys.stdout.write(format_survey(rep))
    return 0 if data.responses else 1


def cmd_scapeplot(args) -> int:
    cfg = _metric_cfg(args)
    notes = _read_notes(args.midi)
    plot = scape_plot_for_notes(notes, cfg.frame_rate, cfg.smooth_s, cfg.keep_fraction,
                                cfg.penalty, cfg.max_frames)
    fmt = args.format if args.format in ("csv", "pgm") else (
        "pgm" if str(args.out).endswith(".pgm") else "csv")
    Path(args.out).write_text(plot.to_pgm() if fmt == "pgm" else plot.to_csv())
    print(f"wrote {plot.n}x{plot.n} scape plot ({fmt}) to {args.out}")
    return 0


def cmd_experiment(args) -> int:
    manifest = load_manifest(args.manifest or default_corpus_dir() / "manifest.json")
    cfg = _run_config(args)
    out = _out_dir(args)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(handler)
    saved = root.level
    root.setLevel(logging.INFO)
    handler.setLevel(logging.INFO)
    t0 = time.perf_counter()
    try:
        log.info("experiment on %s (seed %d)", manifest.name, cfg.seed)
        report = run_experiment(manifest, cfg, out, args.workers)
        log.info("finished in %.1f s", time.perf_counter() - t0)
    finally:
        root.removeHandler(handler)
        root.setLevel(saved)
        handler.close()
    sys.stdout.write(format_report(report))
    return 0


def cmd_mini_corpus(args) -> int:
    n = args.files
    splits = (16, 4, 10) if n == 30 else (n - n // 3 - n // 8, n // 8, n // 3)
    path = make_mini_corpus(args.out, n, _seed(args) if args.seed is not None else 2024,
                            splits)
    print(f"wrote {args.files} piece(s) and {path}")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_metric_flags(p):
    p.add_argument("--frame-rate", type=float, default=10.0, help="chroma frames per second")
    p.add_argument("--windows", type=int, default=10, help="consistency windows")
    p.add_argument("--bands", help="SI band edges in seconds, e.g. 3,8,15")
    p.add_argument("--max-frames", type=int, default=150,
                   help="subsample SSMs above this size (0 = never)")
    p.add_argument("--workers", type=int, default=1)


def _add_stat_flags(p):
    p.add_argument("--bootstrap-n", type=int, default=9999)
    p.add_argument("--level", type=float, default=0.95)


def _add_harness_flags(p):
    p.add_argument("--primers", type=int, default=10)
    p.add_argument("--continuations", type=int, default=3)
    p.add_argument("--primer-len", type=int, default=256)
    p.add_argument("--total-len", type=int, default=2048)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="structok", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--seed", type=int, default=None,
                    help="RNG seed (default: $STRUCTOK_SEED or 0)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="describe a MIDI file")
    p.add_argument("midi")
    p.add_argument("--notes", action="store_true", help="include the note list")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("tokenize", help="MIDI files or directories to token files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--kind", default="explicit")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("binary", "text"), default="binary")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize", help="token file to MIDI")
    p.add_argument("tokens")
    p.add_argument("--kind", help="required for text token files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detokenize)

    p = sub.add_parser("stats", help="corpus token statistics")
    p.add_argument("manifest")
    p.add_argument("--kind", default="both")
    p.add_argument("--out")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="fit the Markov model on a manifest's train split")
    p.add_argument("manifest")
    p.add_argument("--kind", default="explicit")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="continue primers from a manifest's test split")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("binary", "text"), default="binary")
    _add_harness_flags(p)
    _add_metric_flags(p)
    _add_stat_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="per-piece metrics for MIDI or token files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    _add_metric_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="bootstrap comparison of two metric JSONL files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--label-a", default="original")
    p.add_argument("--label-b", default="explicit")
    p.add_argument("--out")
    p.add_argument("--format", choices=("text", "json"), default="text")
    _add_stat_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("survey", help="Likert survey CSV analysis")
    p.add_argument("csv")
    p.add_argument("--out")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.set_defaults(func=cmd_survey)

    p = sub.add_parser("scapeplot", help="export a fitness scape plot")
    p.add_argument("midi")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("auto", "csv", "pgm"), default="auto")
    _add_metric_flags(p)
    p.set_defaults(func=cmd_scapeplot)

    p = sub.add_parser("experiment", help="full two-notation comparison")
    p.add_argument("manifest", nargs="?", help="default: bundled mini-corpus")
    p.add_argument("--out", required=True)
    _add_harness_flags(p)
    _add_metric_flags(p)
    _add_stat_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("mini-corpus", help="write the synthetic mini-corpus")
    p.add_argument("--out", default=str(default_corpus_dir()))
    p.add_argument("--files", type=int, default=30)
    p.set_defaults(func=cmd_mini_corpus)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    for h in logging.getLogger().handlers:
        h.setLevel(level)
    try:
        return args.func(args)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, TooShort, EmptyCorpus) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
