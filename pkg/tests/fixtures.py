"""Note-list fixtures shared by structure and acceptance tests."""

import numpy as np

from structok.smf import Note, NoteList


def aa_piece(seed: int = 0, half_s: float = 20.0, scale: float = 1.0) -> NoteList:
    """Random melody A of ``half_s`` seconds played twice back to back."""
    rng = np.random.default_rng(seed)
    a, t = [], 0.0
    while t < half_s - 1e-9:
        d = min(float(rng.choice([0.25, 0.5])), half_s - t)
        a.append((t, d, int(rng.integers(48, 84))))
        t = round(t + d, 6)
    notes = [Note(on * scale, d * scale, p, 80) for on, d, p in a]
    notes += [Note((on + half_s) * scale, d * scale, p, 80) for on, d, p in a]
    return NoteList(tuple(notes))


def shuffled(notes: NoteList, seed: int) -> NoteList:
    """Same notes in a random order, laid end to end."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(notes))
    out, t = [], 0.0
    for i in order:
        n = notes.notes[int(i)]
        out.append(Note(t, n.duration_s, n.pitch, n.velocity))
        t += n.duration_s
    return NoteList(tuple(out))
