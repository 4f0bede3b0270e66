"""Event tokenization of note lists.

Two representations share one 10 ms time grid:

``ONOFF``
    NOTE_ON / NOTE_OFF pairs, the usual performance-event style.
``EXPLICIT``
    NOTE_ON immediately followed by a DURATION token; note ends never
    appear on the timeline.

Both use persistent VELOCITY state (emitted only on change) and
TIME_SHIFT tokens of up to one second each.
"""

from __future__ import annotations

import enum
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

from .smf import Note, NoteList

GRID_S = 0.01
STEPS_PER_SECOND = 100
MAX_SHIFT = 100
VELOCITY_BINS = 32
DEFAULT_VELOCITY_BIN = 20
FINE_DURATION_BINS = 100
DURATION_BINS = 140

TOKEN_MAGIC = b"STOK"
TOKEN_VERSION = 1


class EmptyCorpus(ValueError):
    pass


class RepresentationKind(enum.Enum):
    ONOFF = "onoff"
    EXPLICIT = "explicit"

    @classmethod
    def parse(cls, value) -> "RepresentationKind":
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        aliases = {"onoff": cls.ONOFF, "original": cls.ONOFF,
                   "explicit": cls.EXPLICIT, "duration": cls.EXPLICIT}
        try:
            return aliases[v]
        except KeyError:
            raise ValueError(f"unknown representation {value!r}") from None

    @property
    def code(self) -> int:
        return 0 if self is RepresentationKind.ONOFF else 1


@dataclass(frozen=True)
class Family:
    name: str
    size: int
    first_index: int  # smallest valid in-family index
    offset: int  # id of the first token in this family


class Vocabulary:
    """Contiguous id layout for one representation."""

    def __init__(self, kind: RepresentationKind):
        self.kind = kind
        if kind is RepresentationKind.ONOFF:
            spec = [("NOTE_ON", 128, 0), ("NOTE_OFF", 128, 0),
                     ("TIME_SHIFT", MAX_SHIFT, 1), ("VELOCITY", VELOCITY_BINS, 0)]
        else:
            spec = [("NOTE_ON", 128, 0), ("DURATION", DURATION_BINS, 1),
                     ("TIME_SHIFT", MAX_SHIFT, 1), ("VELOCITY", VELOCITY_BINS, 0)]
        fams = []
        offset = 0
        for name, size, first in spec:
            fams.append(Family(name, size, first, offset))
            offset += size
        self.families = tuple(fams)
        self.by_name = {f.name: f for f in fams}
        self.size = offset

    def __len__(self):
        return self.size

    def id(self, family: str, index: int) -> int:
        f = self.by_name[family]
        if not f.first_index <= index < f.first_index + f.size:
            raise ValueError(f"{family} index {index} out of range")
        return f.offset + index - f.first_index

    def lookup(self, token_id: int) -> tuple[str, int]:
        if not 0 <= token_id < self.size:
            raise ValueError(f"token id {token_id} outside vocabulary of {self.size}")
        for f in self.families:
            if token_id < f.offset + f.size:
                return f.name, token_id - f.offset + f.first_index
        raise AssertionError("unreachable")

    def text(self, token_id: int) -> str:
        name, index = self.lookup(token_id)
        return f"{name}<{index}>"

    def parse_text(self, token: str) -> int:
        name, _, rest = token.strip().partition("<")
        if not rest.endswith(">"):
            raise ValueError(f"malformed token {token!r}")
        return self.id(name, int(rest[:-1]))


@lru_cache(maxsize=None)
def vocabulary(kind) -> Vocabulary:
    return Vocabulary(RepresentationKind.parse(kind))


@dataclass(frozen=True)
class TokenSequence:
    kind: RepresentationKind
    ids: tuple[int, ...]
    source_id: str = ""
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __len__(self):
        return len(self.ids)


# ---------------------------------------------------------------------------
# quantization

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def to_steps(seconds: float) -> int:
    return _round_half_up(seconds * STEPS_PER_SECOND)


def quantize_velocity(v: int) -> int:
    return min(VELOCITY_BINS - 1, max(0, int(v) // 4))


def velocity_of_bin(b: int) -> int:
    return min(127, max(1, b * 4 + 2))


def _shift_tokens(steps: int) -> list[int]:
    out = [MAX_SHIFT] * (steps // MAX_SHIFT)
    if steps % MAX_SHIFT:
        out.append(steps % MAX_SHIFT)
    return out


def quantize_time_shift(gap_s: float) -> list[int]:
    """TIME_SHIFT indices realizing a gap, on the 10 ms grid."""
    return _shift_tokens(to_steps(gap_s))


def quantize_duration(d_s: float) -> int:
    if d_s < 1.05:
        return min(FINE_DURATION_BINS, max(1, to_steps(d_s)))
    return min(DURATION_BINS, FINE_DURATION_BINS + _round_half_up((d_s - 1.0) * 10))


def duration_of_bin(index: int) -> float:
    if index <= FINE_DURATION_BINS:
        return index / 100
    return (index - 90) / 10


def duration_steps_of_bin(index: int) -> int:
    return index if index <= FINE_DURATION_BINS else (index - 90) * 10


# ---------------------------------------------------------------------------
# encoding

def _quantized(notes: Iterable[Note]):
    """(onset step, pitch, duration steps, velocity bin, duration s), sorted."""
    q = []
    for n in notes:
        on = to_steps(n.onset_s)
        dur = max(1, to_steps(n.duration_s))
        q.append((on, n.pitch, dur, quantize_velocity(n.velocity), n.duration_s))
    q.sort()
    return q


def encode(notes: NoteList | Sequence[Note], kind, source_id: str = "") -> TokenSequence:
    kind = RepresentationKind.parse(kind)
    voc = vocabulary(kind)
    ids: list[int] = []
    clock = 0
    vel = None

    def advance(t):
        nonlocal clock
        for s in _shift_tokens(t - clock):
            ids.append(voc.id("TIME_SHIFT", s))
        clock = t

    def start(pitch, vbin):
        nonlocal vel
        if vbin != vel:
            ids.append(voc.id("VELOCITY", vbin))
            vel = vbin
        ids.append(voc.id("NOTE_ON", pitch))

    q = _quantized(notes)
    if kind is RepresentationKind.EXPLICIT:
        for on, pitch, _, vbin, dur_s in q:
            advance(on)
            start(pitch, vbin)
            ids.append(voc.id("DURATION", quantize_duration(dur_s)))
    else:
        # ends sort before starts at the same step; each group by pitch
        events = []
        for on, pitch, dur, vbin, _ in q:
            events.append((on, 1, pitch, dur, vbin))
            events.append((on + dur, 0, pitch, 0, 0))
        events.sort()
        for t, is_on, pitch, _, vbin in events:
            advance(t)
            if is_on:
                start(pitch, vbin)
            else:
                ids.append(voc.id("NOTE_OFF", pitch))
    return TokenSequence(kind, tuple(ids), source_id)


# ---------------------------------------------------------------------------
# decoding

def decode(seq: TokenSequence) -> NoteList:
    """Lenient inverse of :func:`encode`; repairs are counted as anomalies."""
    voc = vocabulary(seq.kind)
    clock = 0
    vel = DEFAULT_VELOCITY_BIN
    anomalies = 0
    out: list[tuple[int, int, int, int]] = []  # onset, dur steps, pitch, vel bin

    if seq.kind is RepresentationKind.EXPLICIT:
        pending = None

        def flush():
            nonlocal pending, anomalies
            if pending is not None:
                anomalies += 1
                out.append((pending[0], 1, pending[1], pending[2]))
                pending = None

        for tid in seq.ids:
            name, index = voc.lookup(tid)
            if name == "TIME_SHIFT":
                flush()
                clock += index
            elif name == "VELOCITY":
                vel = index
            elif name == "NOTE_ON":
                flush()
                pending = (clock, index, vel)
            elif pending is None:
                anomalies += 1
            else:
                out.append((pending[0], duration_steps_of_bin(index), pending[1], pending[2]))
                pending = None
        flush()
    else:
        open_notes: dict[int, list[tuple[int, int]]] = {}
        for tid in seq.ids:
            name, index = voc.lookup(tid)
            if name == "TIME_SHIFT":
                clock += index
            elif name == "VELOCITY":
                vel = index
            elif name == "NOTE_ON":
                open_notes.setdefault(index, []).append((clock, vel))
            else:
                stack = open_notes.get(index)
                if not stack:
                    anomalies += 1
                    continue
                on, v = stack.pop(0)
                if clock == on:
                    anomalies += 1
                out.append((on, max(1, clock - on), index, v))
        for pitch, stack in open_notes.items():
            for on, v in stack:
                anomalies += 1
                out.append((on, max(1, clock - on), pitch, v))

    notes = tuple(Note(on / STEPS_PER_SECOND, d / STEPS_PER_SECOND, p, velocity_of_bin(v))
                  for on, d, p, v in out)
    return NoteList(notes, clock / STEPS_PER_SECOND, anomalies)


# ---------------------------------------------------------------------------
# corpus statistics

@dataclass(frozen=True)
class CorpusStats:
    kind: RepresentationKind
    file_count: int
    mean_length: float
    mean_uniques: float
    family_counts: dict

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "files": self.file_count,
                "avg_length": self.mean_length, "avg_uniques": self.mean_uniques,
                "family_counts": dict(self.family_counts)}


def corpus_stats(seqs: Sequence[TokenSequence]) -> CorpusStats:
    if not seqs:
        raise EmptyCorpus("no token sequences")
    kinds = {s.kind for s in seqs}
    if len(kinds) != 1:
        raise ValueError("corpus mixes representation kinds")
    kind = kinds.pop()
    voc = vocabulary(kind)
    fam = Counter()
    for s in seqs:
        for tid in s.ids:
            fam[voc.lookup(tid)[0]] += 1
    return CorpusStats(
        kind,
        len(seqs),
        sum(len(s.ids) for s in seqs) / len(seqs),
        sum(len(set(s.ids)) for s in seqs) / len(seqs),
        {f.name: fam.get(f.name, 0) for f in voc.families},
    )


# ---------------------------------------------------------------------------
# token files

def dumps_text(seq: TokenSequence) -> str:
    voc = vocabulary(seq.kind)
    return "".join(voc.text(t) + "\n" for t in seq.ids)


def loads_text(text: str, kind, source_id: str = "") -> TokenSequence:
    voc = vocabulary(kind)
    ids = tuple(voc.parse_text(line) for line in text.splitlines() if line.strip())
    return TokenSequence(voc.kind, ids, source_id)


def dumps_binary(seq: TokenSequence) -> bytes:
    head = TOKEN_MAGIC + struct.pack("<BB", TOKEN_VERSION, seq.kind.code)
    return head + struct.pack(f"<{len(seq.ids)}H", *seq.ids)


def loads_binary(data: bytes, source_id: str = "") -> TokenSequence:
    if data[:4] != TOKEN_MAGIC:
        raise ValueError("not a token file (bad magic)")
    version, code = struct.unpack("<BB", data[4:6])
    if version != TOKEN_VERSION:
        raise ValueError(f"unsupported token file version {version}")
    kind = RepresentationKind.ONOFF if code == 0 else RepresentationKind.EXPLICIT
    body = data[6:]
    if len(body) % 2:
        raise ValueError("truncated token file")
    ids = struct.unpack(f"<{len(body) // 2}H", body)
    size = vocabulary(kind).size
    if any(i >= size for i in ids):
        raise ValueError("token id outside vocabulary")
    return TokenSequence(kind, tuple(ids), source_id)


def save_tokens(seq: TokenSequence, path, fmt: str = "binary") -> None:
    if fmt == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps_text(seq))
    else:
        with open(path, "wb") as fh:
            fh.write(dumps_binary(seq))


def load_tokens(path, kind=None) -> TokenSequence:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == TOKEN_MAGIC:
        return loads_binary(data, str(path))
    if kind is None:
        raise ValueError(f"{path}: text token files need an explicit kind")
    return loads_text(data.decode("utf-8"), kind, str(path))
