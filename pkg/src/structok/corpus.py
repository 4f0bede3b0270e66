"""Dataset manifests and the bundled synthetic mini-corpus."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import smf
from .tokenizer import EmptyCorpus

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    split: str


@dataclass
class DatasetManifest:
    name: str
    entries: list[ManifestEntry]
    kind: str | None = None
    notes: str = ""

    def split(self, name: str) -> list[Path]:
        return [e.path for e in self.entries if e.split == name]

    def counts(self) -> dict:
        return {s: len(self.split(s)) for s in SPLITS}


def load_manifest(path) -> DatasetManifest:
    """Read a JSON manifest; relative paths resolve against its directory.

    Schema::

        {"name": "mini", "kind": "explicit",  # kind optional
         "files": [{"path": "a.mid", "split": "train"}, ...]}
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    base = path.parent
    entries = []
    seen = set()
    for item in data.get("files", []):
        p = Path(item["path"])
        p = p if p.is_absolute() else base / p
        split = item.get("split", "train")
        if split not in SPLITS:
            raise ValueError(f"{path}: unknown split {split!r}")
        if p in seen:
            raise ValueError(f"{path}: duplicate entry {p}")
        seen.add(p)
        entries.append(ManifestEntry(p, split))
    if not entries:
        raise EmptyCorpus(f"{path}: manifest lists no files")
    return DatasetManifest(data.get("name", path.stem), entries, data.get("kind"),
                           data.get("notes", ""))


def discover_midi(paths) -> list[Path]:
    """Expand directories recursively to .mid/.midi files, sorted."""
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += [q for q in p.rglob("*") if q.suffix.lower() in (".mid", ".midi")]
        else:
            out.append(p)
    return sorted(set(out), key=lambda q: str(q))


# ---------------------------------------------------------------------------
# synthetic mini-corpus

MAJOR = (0, 2, 4, 5, 7, 9, 11)
MINOR = (0, 2, 3, 5, 7, 8, 10)
PROGRESSIONS = ((0, 5, 3, 4), (0, 3, 4, 0), (5, 3, 0, 4), (0, 4, 5, 3), (1, 4, 0, 0))
FORMS = ("AABA", "ABAB", "AABB", "ABAC", "ABCA")


def _scale_pitch(tonic, scale, degree):
    octave, step = divmod(degree, len(scale))
    return tonic + 12 * octave + scale[step]


def _section(rng, tonic, scale, bars, ppq):
    """One section: melody, chords and bass as (on, off, channel, pitch, vel)."""
    bar = 4 * ppq
    prog = PROGRESSIONS[int(rng.integers(len(PROGRESSIONS)))]
    motif_len = 2 * bar
    rhythm_choices = ((ppq, ppq, ppq // 2, ppq // 2, ppq), (ppq // 2,) * 4 + (ppq, ppq),
                      (2 * ppq, ppq, ppq), (ppq, ppq // 2, ppq // 2, 2 * ppq))
    motif = []
    t = 0
    degree = int(rng.integers(7, 12))
    while t < motif_len:
        r = rhythm_choices[int(rng.integers(len(rhythm_choices)))]
        for d in r:
            if t >= motif_len:
                break
            d = min(d, motif_len - t)
            motif.append((t, d, degree))
            degree = int(np.clip(degree + rng.integers(-2, 3), 5, 16))
            t += d
    events = []
    vel = int(rng.integers(64, 100))
    for rep in range(bars // 2):
        shift = 0 if rep % 2 == 0 else int(rng.choice((0, 0, 2, -1)))
        for on, d, deg in motif:
            start = rep * motif_len + on
            pitch = _scale_pitch(tonic, scale, deg + shift)
            events.append((start, start + d, 0, pitch, vel + int(rng.integers(-6, 7))))
    for b in range(bars):
        root = prog[b % len(prog)]
        start = b * bar
        chord = [_scale_pitch(tonic - 12, scale, root + k) for k in (0, 2, 4)]
        arpeggio = rng.random() < 0.4
        for k, p in enumerate(chord):
            if arpeggio:
                on = start + k * ppq
                events.append((on, start + bar, 1, p, vel - 12))
            else:
                events.append((start, start + bar, 1, p, vel - 16))
        events.append((start, start + bar, 2, _scale_pitch(tonic - 24, scale, root), vel - 8))
    return events, bars * bar


def _track(events, channel_program=None):
    timed = []
    for on, off, ch, pitch, vel in events:
        timed.append((off, 0, ch, pitch, 0))
        timed.append((on, 1, ch, pitch, int(np.clip(vel, 1, 127))))
    timed.sort()
    out = []
    if channel_program is not None:
        out.append(smf.program_change(0, *channel_program))
    last = 0
    for t, is_on, ch, pitch, vel in timed:
        maker = smf.note_on if is_on else smf.note_off
        out.append(maker(t - last, ch, pitch, vel))
        last = t
    out.append(smf.end_of_track())
    return tuple(out)


def synth_piece(seed: int, ppq: int = 480) -> smf.MidiDocument:
    """A small structured multi-track piece with a drum part and tempo map."""
    rng = np.random.default_rng(seed)
    tonic = int(rng.integers(55, 67))
    scale = MAJOR if rng.random() < 0.6 else MINOR
    form = FORMS[int(rng.integers(len(FORMS)))]
    bars = int(rng.choice((4, 8)))
    sections = {}
    notes = []
    t = 0
    for label in form:
        if label not in sections:
            sections[label] = _section(rng, tonic, scale, bars, ppq)
        evs, length = sections[label]
        notes += [(on + t, off + t, ch, p, v) for on, off, ch, p, v in evs]
        t += length
    drums = []
    for beat in range(0, t, ppq):
        drums.append((beat, beat + ppq // 4, 9, 36 if (beat // ppq) % 2 == 0 else 42, 90))
    bpm = int(rng.choice((96, 108, 120, 132)))
    tempo_events = [smf.tempo(0, 60_000_000 // bpm)]
    if rng.random() < 0.3:
        tempo_events.append(smf.tempo(t // 2, 60_000_000 // (bpm - 12)))
    tempo_track = tuple(tempo_events) + (smf.end_of_track(),)
    tracks = [tempo_track]
    for ch in (0, 1, 2):
        tracks.append(_track([e for e in notes if e[2] == ch], (ch, (0, 48, 32)[ch])))
    tracks.append(_track(drums))
    return smf.MidiDocument(1, ppq, tuple(tracks))


def make_mini_corpus(out_dir, n_files: int = 30, seed: int = 2024,
                     splits=(16, 4, 10)) -> Path:
    """Write ``n_files`` synthetic pieces plus ``manifest.json``; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if sum(splits) != n_files:
        raise ValueError("split sizes must add up to n_files")
    labels = [s for s, k in zip(SPLITS, splits) for _ in range(k)]
    files = []
    for i in range(n_files):
        name = f"piece_{i:03d}.mid"
        smf.write_midi(synth_piece(seed * 1000 + i), out_dir / name)
        files.append({"path": name, "split": labels[i]})
    manifest = {"name": "mini", "notes": "synthetic structured pieces", "files": files}
    mpath = out_dir / "manifest.json"
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return mpath


def default_corpus_dir() -> Path:
    env = os.environ.get("STRUCTOK_CORPUS")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data" / "mini_corpus"
