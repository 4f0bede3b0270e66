"""Primer/continuation generation harness with a Markov reference model.

Any object with ``vocab_size``, ``kind`` and ``distribution(context)`` can
drive the harness; :class:`MarkovModel` is the built-in stand-in.
"""

from __future__ import annotations

import logging
import struct
from collections import defaultdict
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .tokenizer import EmptyCorpus, RepresentationKind, TokenSequence, vocabulary

log = logging.getLogger(__name__)

MODEL_MAGIC = b"SMKV"
MODEL_VERSION = 1


class InsufficientCorpus(ValueError):
    def __init__(self, available: int, requested: int):
        super().__init__(f"{available} eligible file(s), {requested} requested")
        self.available = available
        self.requested = requested


class GeneratorModel(Protocol):
    kind: RepresentationKind
    vocab_size: int

    def distribution(self, context: Sequence[int]) -> np.ndarray: ...


@dataclass(frozen=True)
class HarnessConfig:
    primer_len: int = 256
    total_len: int = 2048
    continuations_per_primer: int = 3
    primers_per_dataset: int = 10
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.primer_len < self.total_len:
            raise ValueError("need 0 < primer_len < total_len")


class MarkovModel:
    """Order-k token model with additive smoothing and backoff.

    Counts are kept for every context length from k down to 0. A context
    never seen in training falls back to the longest seen suffix; with no
    data at all the distribution is uniform.
    """

    def __init__(self, kind, vocab_size: int, order: int = 3, alpha: float = 0.1,
                 counts: dict | None = None):
        if order < 1:
            raise ValueError("order must be >= 1")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.kind = RepresentationKind.parse(kind)
        self.vocab_size = vocab_size
        self.order = order
        self.alpha = alpha
        # context tuple -> {next id: count}
        self.counts: dict[tuple, dict[int, int]] = counts if counts is not None else {}
        self._cache: dict[tuple, np.ndarray] = {}

    def probability(self, context: Sequence[int], token: int) -> float:
        return float(self.distribution(context)[token])

    def _lookup(self, context: tuple):
        for j in range(min(self.order, len(context)), -1, -1):
            ctx = context[len(context) - j:]
            if ctx in self.counts:
                return ctx
        return None

    def distribution(self, context: Sequence[int]) -> np.ndarray:
        ctx = self._lookup(tuple(context[-self.order:]) if self.order else ())
        if ctx in self._cache:
            return self._cache[ctx]
        v = self.vocab_size
        if ctx is None:
            dist = np.full(v, 1.0 / v)
        else:
            row = self.counts[ctx]
            dist = np.full(v, self.alpha)
            for tok, c in row.items():
                dist[tok] += c
            dist /= dist.sum()
        self._cache[ctx] = dist
        return dist


def train_markov(corpus: Sequence[TokenSequence], order: int = 3,
                 alpha: float = 0.1) -> MarkovModel:
    if not corpus:
        raise EmptyCorpus("no training sequences")
    kinds = {s.kind for s in corpus}
    if len(kinds) != 1:
        raise ValueError("corpus mixes representation kinds")
    kind = kinds.pop()
    counts: dict[tuple, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for seq in corpus:
        ids = seq.ids
        for i in range(1, len(ids)):
            tok = ids[i]
            for j in range(0, min(order, i) + 1):
                counts[tuple(ids[i - j:i])][tok] += 1
    plain = {ctx: dict(row) for ctx, row in counts.items()}
    return MarkovModel(kind, vocabulary(kind).size, order, alpha, plain)


def _apply_temperature(dist: np.ndarray, temperature: float) -> np.ndarray:
    if temperature == 1.0:
        return dist
    logits = np.log(np.maximum(dist, 1e-300)) / temperature
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


def sample_continuation(model: GeneratorModel, primer: Sequence[int], total_len: int,
                        temperature: float = 1.0, seed=0, argmax: bool = False,
                        source_id: str = "") -> TokenSequence:
    """Extend ``primer`` autoregressively until it holds ``total_len`` tokens."""
    if len(primer) >= total_len:
        raise ValueError("primer must be shorter than total_len")
    if temperature <= 0 and not argmax:
        raise ValueError("temperature must be positive (or use argmax)")
    rng = np.random.default_rng(seed)
    ids = list(primer)
    while len(ids) < total_len:
        dist = model.distribution(ids)
        if argmax:
            ids.append(int(np.argmax(dist)))
            continue
        p = _apply_temperature(dist, temperature)
        cdf = np.cumsum(p)
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        ids.append(min(k, len(p) - 1))
    meta = {"temperature": None if argmax else temperature, "argmax": argmax,
            "primer_len": len(primer)}
    return TokenSequence(model.kind, tuple(ids), source_id, meta)


def run_harness(model: GeneratorModel, test_corpus: Sequence[TokenSequence],
                cfg: HarnessConfig = HarnessConfig()) -> list[TokenSequence]:
    """Continue seeded primers drawn from ``test_corpus``."""
    eligible = sorted((s for s in test_corpus if len(s.ids) >= cfg.primer_len),
                      key=lambda s: s.source_id)
    skipped = len(test_corpus) - len(eligible)
    if skipped:
        log.warning("skipping %d piece(s) shorter than %d tokens", skipped, cfg.primer_len)
    if len(eligible) < cfg.primers_per_dataset:
        raise InsufficientCorpus(len(eligible), cfg.primers_per_dataset)
    rng = np.random.default_rng(cfg.seed)
    chosen = rng.choice(len(eligible), size=cfg.primers_per_dataset, replace=False)
    out = []
    for pi, idx in enumerate(chosen):
        src = eligible[int(idx)]
        primer = src.ids[:cfg.primer_len]
        for ci in range(cfg.continuations_per_primer):
            seq = sample_continuation(model, primer, cfg.total_len, cfg.temperature,
                                      seed=[cfg.seed, pi, ci],
                                      source_id=f"{src.source_id}#{ci}")
            seq.meta.update(primer_source=src.source_id, continuation=ci)
            out.append(seq)
    return out


# ---------------------------------------------------------------------------
# persistence

def dumps_model(model: MarkovModel) -> bytes:
    parts = [MODEL_MAGIC,
             struct.pack("<HBBdI", MODEL_VERSION, model.kind.code, model.order,
                         model.alpha, model.vocab_size),
             struct.pack("<I", len(model.counts))]
    for ctx in sorted(model.counts, key=lambda c: (len(c), c)):
        row = model.counts[ctx]
        parts.append(struct.pack(f"<B{len(ctx)}HI", len(ctx), *ctx, len(row)))
        for tok in sorted(row):
            parts.append(struct.pack("<HI", tok, row[tok]))
    return b"".join(parts)


def loads_model(data: bytes) -> MarkovModel:
    if data[:4] != MODEL_MAGIC:
        raise ValueError("not a Markov model file (bad magic)")
    version, code, order, alpha, vsize = struct.unpack_from("<HBBdI", data, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    pos = 4 + struct.calcsize("<HBBdI")
    (n_ctx,) = struct.unpack_from("<I", data, pos)
    pos += 4
    counts = {}
    for _ in range(n_ctx):
        (clen,) = struct.unpack_from("<B", data, pos)
        pos += 1
        ctx = struct.unpack_from(f"<{clen}H", data, pos)
        pos += 2 * clen
        (nrow,) = struct.unpack_from("<I", data, pos)
        pos += 4
        row = {}
        for _ in range(nrow):
            tok, c = struct.unpack_from("<HI", data, pos)
            pos += 6
            row[tok] = c
        counts[tuple(ctx)] = row
    kind = RepresentationKind.ONOFF if code == 0 else RepresentationKind.EXPLICIT
    return MarkovModel(kind, vsize, order, alpha, counts)


def save_model(model: MarkovModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> MarkovModel:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
