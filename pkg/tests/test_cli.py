import json
import shutil

import numpy as np
import pytest

from structok import smf
from structok.cli import main, stats_report
from structok.corpus import default_corpus_dir, load_manifest
from structok.experiment import all_cells_populated
from structok.survey import analyze_survey, parse_survey
from structok.tokenizer import EmptyCorpus, RepresentationKind, load_tokens

CORPUS = default_corpus_dir()
PIECE = CORPUS / "piece_000.mid"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_inspect(capsys):
    code, out, _ = run(capsys, "inspect", PIECE)
    info = json.loads(out)
    assert code == 0 and info["format"] == 1


def test_tokenize_directory_with_corrupt_file(tmp_path, capsys):
    src = tmp_path / "in"
    (src / "sub").mkdir(parents=True)
    shutil.copy(PIECE, src / "a.mid")
    shutil.copy(CORPUS / "piece_001.mid", src / "sub" / "b.mid")
    (src / "bad.mid").write_bytes(b"MThd\x00\x00\x00\x06garbage")
    code, out, _ = run(capsys, "tokenize", src, "--kind", "onoff", "--out", tmp_path / "tok")
    assert code == 0
    summary = json.loads((tmp_path / "tok" / "summary.json").read_text())
    assert len(summary["files"]) == 2
    assert [e["path"].endswith("bad.mid") for e in summary["errors"]] == [True]
    assert (tmp_path / "tok" / "run_config.json").exists()
    seq = load_tokens(tmp_path / "tok" / summary["files"][0]["tokens"])
    assert seq.kind is RepresentationKind.ONOFF and len(seq.ids) > 0


def test_tokenize_all_fail(tmp_path, capsys):
    (tmp_path / "bad.mid").write_bytes(b"nope")
    code, _, _ = run(capsys, "tokenize", tmp_path / "bad.mid", "--out", tmp_path / "o")
    assert code != 0


def test_tokenize_detokenize_text(tmp_path, capsys):
    assert run(capsys, "tokenize", PIECE, "--format", "text", "--out", tmp_path)[0] == 0
    tok = next(tmp_path.glob("*.txt"))
    code, _, _ = run(capsys, "detokenize", tok, "--kind", "explicit", "--out", tmp_path / "r.mid")
    assert code == 0
    a = smf.extract_notes(smf.read_midi(PIECE))
    b = smf.extract_notes(smf.read_midi(tmp_path / "r.mid"))
    assert sorted(n.pitch for n in a) == sorted(n.pitch for n in b)


def test_stats_direction(capsys):
    code, out, _ = run(capsys, "stats", CORPUS / "manifest.json", "--format", "json")
    rep = json.loads(out)
    assert code == 0
    assert rep["rows"]["explicit"]["avg_length"] < rep["rows"]["onoff"]["avg_length"]
    assert rep["rows"]["onoff"]["total"] == 30
    assert (rep["rows"]["onoff"]["train"], rep["rows"]["onoff"]["validation"],
            rep["rows"]["onoff"]["test"]) == (16, 4, 10)


def test_stats_empty_manifest(tmp_path, capsys):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"name": "empty", "files": []}))
    with pytest.raises(EmptyCorpus):
        load_manifest(m)
    code, _, err = run(capsys, "stats", m)
    assert code == 1 and "no files" in err


def test_stats_unreadable_only(tmp_path):
    (tmp_path / "x.mid").write_bytes(b"junk")
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"files": [{"path": "x.mid", "split": "test"}]}))
    with pytest.raises(EmptyCorpus):
        stats_report(load_manifest(m), [RepresentationKind.ONOFF])


# --- survey -------------------------------------------------------------------

def survey_text(rng, n, shift, datasets=("pop", "jazz")):
    rows = ["dataset,notation,O,I,S,R"]
    for ds in datasets:
        for notation, mu in (("original", 2.5), ("explicit", 2.5 + shift)):
            for _ in range(n):
                v = np.clip(np.round(rng.normal(mu, 0.8, 4)), 1, 5).astype(int)
                rows.append(f"{ds},{notation}," + ",".join(map(str, v)))
    return "\n".join(rows) + "\n"


def test_survey_shift_flagged(tmp_path, capsys):
    f = tmp_path / "s.csv"
    f.write_text(survey_text(np.random.default_rng(1), 25, 1.5))
    code, out, _ = run(capsys, "survey", f, "--format", "json")
    rep = json.loads(out)
    assert code == 0
    assert all(rep["rows"]["Average"][q]["significant"] for q in "OISR")
    assert "*" in run(capsys, "survey", f)[1]


def test_survey_identical_groups():
    rows = ["dataset,notation,O,I,S,R"]
    for notation in ("original", "explicit"):
        rows += [f"pop,{notation},{a},{a},3,4" for a in (1, 2, 3, 4, 5)]
    rep = analyze_survey(parse_survey("\n".join(rows)))
    for q in "OISR":
        cell = rep["rows"]["pop"][q]
        assert cell["p"] == 1.0 and not cell["significant"]


def test_survey_single_row_and_malformed(tmp_path, capsys):
    text = ("dataset,notation,O,I,S,R\n"
            "pop,original,3,4,2,5\n"
            "pop,explicit,4,4,3,5\n"
            "pop,weird,1,1,1,1\n"
            "pop,original,9,1,1,1\n"
            "pop,explicit,x,1,1,1\n"
            "pop,original,1,1\n")
    data = parse_survey(text)
    assert [ln for ln, _ in data.malformed] == [4, 5, 6, 7]
    rep = analyze_survey(data)
    cell = rep["rows"]["pop"]["O"]
    assert cell["status"] == "insufficient" and cell["p"] is None
    assert (cell["mean_original"], cell["mean_explicit"]) == (3.0, 4.0)
    f = tmp_path / "s.csv"
    f.write_text(text)
    code, out, err = run(capsys, "survey", f)
    assert code == 0 and "line 4" in err and "?" in out


def test_survey_missing_columns(tmp_path, capsys):
    f = tmp_path / "s.csv"
    f.write_text("dataset,notation,O\npop,original,3\n")
    assert run(capsys, "survey", f)[0] == 1


# --- scape plot, evaluate, compare ------------------------------------------------

@pytest.mark.parametrize("fmt", ["csv", "pgm"])
def test_scapeplot(tmp_path, capsys, fmt):
    out = tmp_path / f"plot.{fmt}"
    assert run(capsys, "scapeplot", PIECE, "--out", out)[0] == 0
    text = out.read_text()
    if fmt == "pgm":
        assert text.startswith("P2")
    else:
        assert "," in text.splitlines()[0]


def test_evaluate_and_compare(tmp_path, capsys):
    files = [CORPUS / f"piece_{i:03d}.mid" for i in range(4)]
    assert run(capsys, "evaluate", *files[:2], "--out", tmp_path / "a")[0] == 0
    assert run(capsys, "evaluate", *files[2:], "--out", tmp_path / "b")[0] == 0
    lines = (tmp_path / "a" / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2 and "si_long" in json.loads(lines[0])
    code, out, _ = run(capsys, "compare", tmp_path / "a" / "metrics.jsonl",
                       tmp_path / "b" / "metrics.jsonl", "--bootstrap-n", "500",
                       "--format", "json")
    assert code == 0
    assert {c["metric"] for c in json.loads(out)["cells"]} >= {"entropy", "consistency"}


# --- pipeline ------------------------------------------------------------------------

def test_train_generate(tmp_path, capsys):
    m = tmp_path / "m.smkv"
    assert run(capsys, "train", CORPUS / "manifest.json", "--kind", "onoff", "--out", m)[0] == 0
    code, _, _ = run(capsys, "--seed", 3, "generate", m, CORPUS / "manifest.json",
                     "--out", tmp_path / "g", "--primers", 2, "--continuations", 1,
                     "--total-len", 400)
    assert code == 0
    assert len(list((tmp_path / "g").glob("gen_*.stok"))) == 2
    assert json.loads((tmp_path / "g" / "run_config.json").read_text())["seed"] == 3


def test_small_experiment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("STRUCTOK_SEED", "5")
    out = tmp_path / "exp"
    code, text, _ = run(capsys, "experiment", "--out", out, "--primers", 2,
                        "--continuations", 1, "--total-len", 512, "--bootstrap-n", 500)
    assert code == 0
    cfg = json.loads((out / "run_config.json").read_text())
    assert cfg["seed"] == 5
    for label in ("original", "explicit"):
        assert len(list((out / label / "generated").glob("*.stok"))) == 2
        assert len(list((out / label / "generated").glob("*.mid"))) == 2
    rep = json.loads((out / "report.json").read_text())
    assert rep["generated"]["explicit"] == {"pieces": 2, "tokens_per_piece": 512}
    assert (out / "run.log").read_text().strip()
    assert "entropy" in text


def test_experiment_bad_manifest(tmp_path, capsys):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"files": [{"path": str(PIECE), "split": "train"}]}))
    code, _, err = run(capsys, "experiment", m, "--out", tmp_path / "o")
    assert code == 1 and "manifest" in err


def test_all_cells_populated_detects_gap():
    rep = {"comparison": {"cells": [{"metric": "entropy", "status": "missing",
                                     "improvement_pct": None}]},
           "real": {"original": {}, "explicit": {}}}
    assert not all_cells_populated(rep)
