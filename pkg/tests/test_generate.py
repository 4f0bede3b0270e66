import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from structok.generate import (HarnessConfig, InsufficientCorpus, MarkovModel, dumps_model,
                               load_model, loads_model, run_harness, sample_continuation,
                               save_model, train_markov)
from structok.tokenizer import EmptyCorpus, RepresentationKind, TokenSequence

ON = RepresentationKind.ONOFF

# sample_continuation(tiny_model(), [1, 2], 32, seed=11), frozen on first review
GOLDEN_32 = [1, 2, 1, 2, 3, 0, 1, 4, 1, 1, 4, 2, 1, 2, 3, 1,
             0, 3, 3, 2, 3, 1, 4, 1, 2, 3, 1, 2, 1, 3, 4, 1]


def seq(ids, sid="s"):
    return TokenSequence(ON, tuple(ids), sid)


def small_vocab(model, v):
    return MarkovModel(model.kind, v, model.order, model.alpha, model.counts)


def tiny_model():
    m = train_markov([seq([1, 2, 3, 1, 2, 1, 3, 3, 2, 1, 2, 3])], order=2, alpha=0.5)
    return small_vocab(m, 5)


def test_hand_counted_bigram():
    m = small_vocab(train_markov([seq([1, 2, 1, 2, 1, 2])], order=1, alpha=1.0), 3)
    # context 1 is followed by 2 at three positions
    assert m.counts[(1,)] == {2: 3}
    assert m.probability([1], 2) == pytest.approx(4 / 6)
    assert m.probability([1], 0) == pytest.approx(1 / 6)
    assert m.probability([2], 1) == pytest.approx(3 / 5)


def test_single_token_corpus_is_uniform():
    m = train_markov([seq([7])])
    d = m.distribution([7, 7, 7])
    assert np.allclose(d, 1 / m.vocab_size)


def test_unseen_context_backs_off():
    m = small_vocab(train_markov([seq([1, 2, 1, 2])], order=2, alpha=1.0), 4)
    # (3, 1) was never seen; the suffix (1,) was
    assert np.allclose(m.distribution([3, 1]), m.distribution([1]))
    assert np.allclose(m.distribution([3]), m.distribution([]))


def test_duplicated_corpus_same_distribution():
    a = seq([1, 2, 3, 1, 2, 2, 3, 1])
    m1 = train_markov([a], order=2)
    m2 = train_markov([a, a], order=2)
    for ctx, row in m1.counts.items():
        assert {k: 2 * c for k, c in row.items()} == m2.counts[ctx]
    # additive smoothing shifts probabilities, so compare the argmax and the support
    for ctx in m1.counts:
        d1, d2 = m1.distribution(ctx), m2.distribution(ctx)
        assert np.argmax(d1) == np.argmax(d2)
        assert np.array_equal(np.argsort(-d1, kind="stable"), np.argsort(-d2, kind="stable"))


def test_empty_corpus_and_mixed_kinds():
    with pytest.raises(EmptyCorpus):
        train_markov([])
    with pytest.raises(ValueError):
        train_markov([seq([1, 2]), TokenSequence(RepresentationKind.EXPLICIT, (1, 2))])
    with pytest.raises(ValueError):
        train_markov([seq([1, 2])], order=0)


def test_argmax_follows_cycle():
    m = train_markov([seq([4, 5, 6] * 20)], order=2)
    out = sample_continuation(m, [4, 5], 20, argmax=True)
    assert list(out.ids) == ([4, 5, 6] * 7)[:20]


def test_determinism_and_golden():
    a = sample_continuation(tiny_model(), [1, 2], 32, seed=11)
    b = sample_continuation(tiny_model(), [1, 2], 32, seed=11)
    assert a.ids == b.ids and len(a) == 32 and a.ids[:2] == (1, 2)
    assert list(a.ids) == GOLDEN_32
    c = sample_continuation(tiny_model(), [1, 2], 32, seed=12)
    assert c.ids != a.ids


def test_temperature_sharpens():
    m = tiny_model()
    cold = sample_continuation(m, [1, 2], 400, temperature=0.05, seed=3)
    hot = sample_continuation(m, [1, 2], 400, temperature=5.0, seed=3)
    assert len(set(cold.ids[2:])) < len(set(hot.ids[2:]))


def test_bad_arguments():
    m = tiny_model()
    with pytest.raises(ValueError):
        sample_continuation(m, [1, 2, 3], 3)
    with pytest.raises(ValueError):
        sample_continuation(m, [1], 5, temperature=0)
    with pytest.raises(ValueError):
        HarnessConfig(primer_len=10, total_len=10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=2, max_size=60), st.integers(1, 4),
       st.lists(st.integers(0, 9), max_size=6))
def test_distribution_sums_to_one(ids, order, ctx):
    m = small_vocab(train_markov([seq(ids)], order=order), 10)
    d = m.distribution(ctx)
    assert d.shape == (10,) and d.min() > 0
    assert d.sum() == pytest.approx(1.0, abs=1e-12)


def test_model_round_trip(tmp_path):
    m = train_markov([seq([1, 2, 3, 1, 2, 1, 3, 300, 2])], order=3, alpha=0.25)
    m2 = loads_model(dumps_model(m))
    assert (m2.kind, m2.order, m2.alpha, m2.vocab_size) == (m.kind, 3, 0.25, m.vocab_size)
    assert m2.counts == m.counts
    save_model(m, tmp_path / "m.smkv")
    assert load_model(tmp_path / "m.smkv").counts == m.counts
    assert dumps_model(m2) == dumps_model(m)
    with pytest.raises(ValueError):
        loads_model(b"XXXX" + dumps_model(m)[4:])


# --- harness ------------------------------------------------------------------

def corpus(n, length=300, seed=0):
    rng = np.random.default_rng(seed)
    return [seq(rng.integers(0, 20, size=length).tolist(), f"p{i:02d}") for i in range(n)]


def test_harness_default_shape():
    test = corpus(10, 300)
    m = small_vocab(train_markov(test, order=2), 20)
    out = run_harness(m, test, HarnessConfig())
    assert len(out) == 30
    assert all(len(s) == 2048 for s in out)
    by_id = {s.source_id: s for s in test}
    for s in out:
        assert s.ids[:256] == by_id[s.meta["primer_source"]].ids[:256]
    assert sorted({s.meta["primer_source"] for s in out}) == sorted(by_id)
    assert sorted(s.meta["continuation"] for s in out) == sorted([0, 1, 2] * 10)


def test_harness_single():
    test = corpus(3, 50)
    m = small_vocab(train_markov(test), 20)
    out = run_harness(m, test, HarnessConfig(primer_len=10, total_len=30,
                                             continuations_per_primer=1, primers_per_dataset=1))
    assert len(out) == 1 and len(out[0]) == 30


def test_harness_insufficient():
    test = corpus(9, 300) + corpus(3, 100, seed=1)
    m = small_vocab(train_markov(test), 20)
    with pytest.raises(InsufficientCorpus) as exc:
        run_harness(m, test, HarnessConfig())
    assert exc.value.available == 9


def test_harness_seeded():
    test = corpus(6, 80)
    m = small_vocab(train_markov(test), 20)
    cfg = HarnessConfig(primer_len=16, total_len=64, primers_per_dataset=4, seed=5)
    a, b = run_harness(m, test, cfg), run_harness(m, test, cfg)
    assert [s.ids for s in a] == [s.ids for s in b]
    c = run_harness(m, test, HarnessConfig(primer_len=16, total_len=64,
                                           primers_per_dataset=4, seed=6))
    assert [s.ids for s in a] != [s.ids for s in c]
