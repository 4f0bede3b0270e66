"""Standard MIDI File reading and writing, plus note extraction.

Only PPQ-division files of format 0 and 1 are supported. Note extraction
drops the percussion channel and flattens every remaining track into one
time-sorted list of notes with absolute times in seconds.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

DEFAULT_TEMPO = 500000
PERCUSSION_CHANNEL = 9
END_OF_TRACK = 0x2F
SET_TEMPO = 0x51


class SmfError(ValueError):
    """Base class for MIDI parsing errors."""


class MalformedVlq(SmfError):
    pass


class UnexpectedEof(SmfError):
    pass


class UnsupportedDivision(SmfError):
    pass


class UnsupportedFormat(SmfError):
    pass


class EventKind(enum.Enum):
    NOTE_ON = "NoteOn"
    NOTE_OFF = "NoteOff"
    TEMPO = "Tempo"
    PROGRAM_CHANGE = "ProgramChange"
    OTHER_META = "OtherMeta"
    OTHER_CHANNEL = "OtherChannel"


@dataclass(frozen=True)
class TimedEvent:
    """One track event.

    ``status`` holds the raw status byte for ``OTHER_CHANNEL`` events and
    0xFF/0xF0/0xF7 for ``OTHER_META`` (meta and sysex). ``data`` carries the
    raw payload of the ``Other*`` kinds.
    """

    delta_ticks: int
    kind: EventKind
    channel: int = 0
    pitch: int = 0
    velocity: int = 0
    tempo_us_per_quarter: int = 0
    program: int = 0
    status: int = 0
    meta_type: int = 0
    data: bytes = b""

    @property
    def is_end_of_track(self) -> bool:
        return (self.kind is EventKind.OTHER_META and self.status == 0xFF
                and self.meta_type == END_OF_TRACK)


def note_on(delta, channel, pitch, velocity):
    if velocity == 0:
        return TimedEvent(delta, EventKind.NOTE_OFF, channel, pitch, 0)
    return TimedEvent(delta, EventKind.NOTE_ON, channel, pitch, velocity)


def note_off(delta, channel, pitch, velocity=0):
    return TimedEvent(delta, EventKind.NOTE_OFF, channel, pitch, velocity)


def tempo(delta, us_per_quarter):
    return TimedEvent(delta, EventKind.TEMPO, tempo_us_per_quarter=us_per_quarter)


def program_change(delta, channel, program):
    return TimedEvent(delta, EventKind.PROGRAM_CHANGE, channel, program=program)


def end_of_track(delta=0):
    return TimedEvent(delta, EventKind.OTHER_META, status=0xFF, meta_type=END_OF_TRACK)


@dataclass(frozen=True)
class MidiDocument:
    format: int
    ticks_per_quarter: int
    tracks: tuple[tuple[TimedEvent, ...], ...]

    def __post_init__(self):
        if self.format not in (0, 1):
            raise UnsupportedFormat(f"format {self.format}")
        if self.ticks_per_quarter < 1 or self.ticks_per_quarter >= 0x8000:
            raise UnsupportedDivision(f"ticks per quarter {self.ticks_per_quarter}")
        tracks = []
        for track in self.tracks:
            track = tuple(track)
            if not track or not track[-1].is_end_of_track:
                track = track + (end_of_track(),)
            tracks.append(track)
        object.__setattr__(self, "tracks", tuple(tracks))


@dataclass(frozen=True)
class Note:
    onset_s: float
    duration_s: float
    pitch: int
    velocity: int

    @property
    def end_s(self) -> float:
        return self.onset_s + self.duration_s


def note_sort_key(n: Note):
    return (n.onset_s, n.pitch, n.duration_s, n.velocity)


@dataclass(frozen=True)
class NoteList:
    """Flat, sorted note list.

    ``anomalies`` counts events the producer had to repair or drop
    (orphan note-offs, zero-length notes, ...).
    """

    notes: tuple[Note, ...] = ()
    total_duration_s: float = 0.0
    anomalies: int = 0

    def __post_init__(self):
        notes = tuple(sorted(self.notes, key=note_sort_key))
        object.__setattr__(self, "notes", notes)
        if notes:
            end = max(n.end_s for n in notes)
            if end > self.total_duration_s:
                object.__setattr__(self, "total_duration_s", end)

    def __len__(self):
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    @property
    def end_s(self) -> float:
        """Time at which the last note stops sounding."""
        return max((n.end_s for n in self.notes), default=0.0)


TempoMap = tuple[tuple[int, int], ...]


# ---------------------------------------------------------------------------
# variable-length quantities

def read_vlq(buf: bytes, pos: int = 0) -> tuple[int, int]:
    """Decode a variable-length quantity starting at ``pos``.

    Returns ``(value, bytes_consumed)``.
    """
    value = 0
    for i in range(4):
        if pos + i >= len(buf):
            raise UnexpectedEof(f"VLQ truncated at byte {pos + i}")
        b = buf[pos + i]
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, i + 1
    raise MalformedVlq(f"VLQ at byte {pos} longer than 4 bytes")


def write_vlq(value: int) -> bytes:
    if not 0 <= value < 1 << 28:
        raise ValueError(f"VLQ value out of range: {value}")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


# ---------------------------------------------------------------------------
# parsing

def _need(buf, pos, n):
    if pos + n > len(buf):
        raise UnexpectedEof(f"need {n} bytes at offset {pos}, file has {len(buf)}")


def _parse_track(buf: bytes) -> tuple[TimedEvent, ...]:
    events = []
    pos = 0
    running = None
    while pos < len(buf):
        delta, used = read_vlq(buf, pos)
        pos += used
        _need(buf, pos, 1)
        status = buf[pos]
        if status & 0x80:
            pos += 1
        elif running is None:
            raise SmfError(f"data byte 0x{status:02x} without running status")
        else:
            status = running

        if status == 0xFF:
            running = None
            _need(buf, pos, 1)
            meta_type = buf[pos]
            length, used = read_vlq(buf, pos + 1)
            pos += 1 + used
            _need(buf, pos, length)
            data = bytes(buf[pos:pos + length])
            pos += length
            if meta_type == SET_TEMPO and length == 3:
                us = int.from_bytes(data, "big")
                if us > 0:
                    events.append(tempo(delta, us))
                    continue
            ev = TimedEvent(delta, EventKind.OTHER_META, status=0xFF,
                            meta_type=meta_type, data=data)
            events.append(ev)
            if ev.is_end_of_track:
                break
        elif status in (0xF0, 0xF7):
            running = None
            length, used = read_vlq(buf, pos)
            pos += used
            _need(buf, pos, length)
            events.append(TimedEvent(delta, EventKind.OTHER_META, status=status,
                                     data=bytes(buf[pos:pos + length])))
            pos += length
        elif status >= 0xF0:
            raise SmfError(f"unexpected status byte 0x{status:02x} in track")
        else:
            running = status
            kind = status & 0xF0
            channel = status & 0x0F
            nbytes = 1 if kind in (0xC0, 0xD0) else 2
            _need(buf, pos, nbytes)
            d = buf[pos:pos + nbytes]
            pos += nbytes
            if kind == 0x90:
                events.append(note_on(delta, channel, d[0], d[1]))
            elif kind == 0x80:
                events.append(note_off(delta, channel, d[0], d[1]))
            elif kind == 0xC0:
                events.append(program_change(delta, channel, d[0]))
            else:
                events.append(TimedEvent(delta, EventKind.OTHER_CHANNEL, channel,
                                         status=status, data=bytes(d)))
    return tuple(events)


def parse_smf(data: bytes) -> MidiDocument:
    data = bytes(data)
    _need(data, 0, 14)
    if data[:4] != b"MThd":
        raise SmfError("missing MThd header")
    hlen = struct.unpack(">I", data[4:8])[0]
    if hlen < 6:
        raise SmfError(f"header length {hlen} < 6")
    _need(data, 8, hlen)
    fmt, ntracks, division = struct.unpack(">HHH", data[8:14])
    if division & 0x8000:
        raise UnsupportedDivision("SMPTE time division is not supported")
    if fmt not in (0, 1):
        raise UnsupportedFormat(f"format {fmt}")
    if division == 0:
        raise UnsupportedDivision("division of 0 ticks per quarter")

    pos = 8 + hlen
    tracks = []
    while pos < len(data) and len(tracks) < ntracks:
        _need(data, pos, 8)
        cid = data[pos:pos + 4]
        clen = struct.unpack(">I", data[pos + 4:pos + 8])[0]
        pos += 8
        _need(data, pos, clen)
        if cid == b"MTrk":
            tracks.append(_parse_track(data[pos:pos + clen]))
        pos += clen
    if len(tracks) < ntracks:
        raise UnexpectedEof(f"header declares {ntracks} tracks, found {len(tracks)}")
    return MidiDocument(fmt, division, tuple(tracks))


def read_midi(path) -> MidiDocument:
    with open(path, "rb") as fh:
        return parse_smf(fh.read())


# ---------------------------------------------------------------------------
# writing

def _encode_event(ev: TimedEvent, running: int | None) -> tuple[bytes, int | None]:
    k = ev.kind
    if k is EventKind.TEMPO:
        return b"\xff\x51\x03" + ev.tempo_us_per_quarter.to_bytes(3, "big"), None
    if k is EventKind.OTHER_META:
        if ev.status == 0xFF:
            return (bytes([0xFF, ev.meta_type]) + write_vlq(len(ev.data)) + ev.data,
                    None)
        return bytes([ev.status]) + write_vlq(len(ev.data)) + ev.data, None
    if k is EventKind.NOTE_ON:
        status, body = 0x90 | ev.channel, bytes([ev.pitch, ev.velocity])
    elif k is EventKind.NOTE_OFF:
        status, body = 0x80 | ev.channel, bytes([ev.pitch, ev.velocity])
    elif k is EventKind.PROGRAM_CHANGE:
        status, body = 0xC0 | ev.channel, bytes([ev.program])
    else:
        status, body = ev.status, ev.data
    if status == running:
        return body, running
    return bytes([status]) + body, status


def write_smf(doc: MidiDocument) -> bytes:
    out = [b"MThd", struct.pack(">IHHH", 6, doc.format, len(doc.tracks),
                                 doc.ticks_per_quarter)]
    for track in doc.tracks:
        chunk = bytearray()
        running = None
        for ev in track:
            chunk += write_vlq(ev.delta_ticks)
            body, running = _encode_event(ev, running)
            chunk += body
        out.append(b"MTrk" + struct.pack(">I", len(chunk)) + bytes(chunk))
    return b"".join(out)


def write_midi(doc: MidiDocument, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_smf(doc))


# ---------------------------------------------------------------------------
# timing

def _absolute(track: Iterable[TimedEvent]):
    t = 0
    for ev in track:
        t += ev.delta_ticks
        yield t, ev


def build_tempo_map(doc: MidiDocument) -> TempoMap:
    by_tick: dict[int, int] = {}
    for track in doc.tracks:
        for t, ev in _absolute(track):
            if ev.kind is EventKind.TEMPO:
                by_tick[t] = ev.tempo_us_per_quarter
    if 0 not in by_tick:
        by_tick[0] = DEFAULT_TEMPO
    return tuple(sorted(by_tick.items()))


class _Clock:
    """Tick to seconds conversion with exact integer accumulation."""

    def __init__(self, tempo_map: TempoMap, ppq: int):
        self.map = tempo_map
        self.ppq = ppq
        # microsecond*ppq offsets at each tempo change
        self.offsets = [0]
        for (t0, us0), (t1, _) in zip(tempo_map, tempo_map[1:]):
            self.offsets.append(self.offsets[-1] + (t1 - t0) * us0)

    def __call__(self, tick: int) -> float:
        i = len(self.map) - 1
        while self.map[i][0] > tick:
            i -= 1
        t0, us = self.map[i]
        return (self.offsets[i] + (tick - t0) * us) / (self.ppq * 1_000_000)


def ticks_to_seconds(tick: int, tempo_map: TempoMap, ppq: int) -> float:
    return _Clock(tempo_map, ppq)(tick)


def seconds_to_ticks(seconds: float, tempo_map: TempoMap, ppq: int) -> int:
    """Inverse of :func:`ticks_to_seconds`, rounded to the nearest tick."""
    target = Fraction(seconds) * ppq * 1_000_000
    acc = 0
    for i, (t0, us) in enumerate(tempo_map):
        nxt = tempo_map[i + 1][0] if i + 1 < len(tempo_map) else None
        if nxt is not None and acc + (nxt - t0) * us <= target:
            acc += (nxt - t0) * us
            continue
        return t0 + round((target - acc) / us)
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# note extraction

def extract_notes(doc: MidiDocument) -> NoteList:
    clock = _Clock(build_tempo_map(doc), doc.ticks_per_quarter)
    merged = []
    final_tick = 0
    for ti, track in enumerate(doc.tracks):
        for ei, (t, ev) in enumerate(_absolute(track)):
            final_tick = max(final_tick, t)
            if ev.kind in (EventKind.NOTE_ON, EventKind.NOTE_OFF):
                merged.append((t, ti, ei, ev))
    merged.sort(key=lambda x: x[:3])

    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
    notes = []
    anomalies = 0

    def close(start, vel, end, pitch):
        nonlocal anomalies
        if end <= start:
            anomalies += 1
            return
        on = clock(start)
        notes.append(Note(on, clock(end) - on, pitch, max(1, vel)))

    for t, _, _, ev in merged:
        if ev.channel == PERCUSSION_CHANNEL:
            continue
        key = (ev.channel, ev.pitch)
        if ev.kind is EventKind.NOTE_ON:
            open_notes.setdefault(key, []).append((t, ev.velocity))
        else:
            stack = open_notes.get(key)
            if not stack:
                anomalies += 1
                continue
            start, vel = stack.pop(0)
            close(start, vel, t, ev.pitch)
    for (_, pitch), stack in sorted(open_notes.items()):
        for start, vel in stack:
            anomalies += 1
            close(start, vel, final_tick, pitch)
    return NoteList(tuple(notes), clock(final_tick), anomalies)


def notes_to_document(notes: NoteList | Sequence[Note], ppq: int = 500,
                      us_per_quarter: int = DEFAULT_TEMPO) -> MidiDocument:
    """Render notes as a format-1 file: a tempo track plus one piano track.

    With the defaults one tick is exactly one millisecond.
    """
    tmap = ((0, us_per_quarter),)
    timed = []
    for n in notes:
        on = seconds_to_ticks(n.onset_s, tmap, ppq)
        off = max(on + 1, seconds_to_ticks(n.end_s, tmap, ppq))
        timed.append((off, 0, n.pitch, n.velocity))
        timed.append((on, 1, n.pitch, n.velocity))
    timed.sort()
    events = [program_change(0, 0, 0)]
    last = 0
    for t, is_on, pitch, vel in timed:
        maker = note_on if is_on else note_off
        events.append(maker(t - last, 0, pitch, vel if is_on else 0))
        last = t
    events.append(end_of_track())
    tempo_track = (tempo(0, us_per_quarter), end_of_track())
    return MidiDocument(1, ppq, (tempo_track, tuple(events)))


def describe(doc: MidiDocument) -> dict:
    counts: dict[str, int] = {}
    for track in doc.tracks:
        for ev in track:
            counts[ev.kind.value] = counts.get(ev.kind.value, 0) + 1
    notes = extract_notes(doc)
    return {
        "format": doc.format,
        "ticks_per_quarter": doc.ticks_per_quarter,
        "tracks": len(doc.tracks),
        "events": counts,
        "tempo_map": [list(x) for x in build_tempo_map(doc)],
        "notes": len(notes),
        "duration_s": notes.total_duration_s,
        "anomalies": notes.anomalies,
    }
