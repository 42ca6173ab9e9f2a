from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from termdecode.acceptor import ConstraintSpec, build_acceptor
from termdecode.metrics import (
    corpus_bleu,
    evaluate,
    format_speed_table,
    length_ratio,
    ratio_between,
    rep_count,
    satisfaction_rate,
    speed_table,
)

sacrebleu = pytest.importorskip("sacrebleu")


def oracle_bleu(hyps, refs) -> float:
    bleu = sacrebleu.metrics.BLEU(tokenize="none", lowercase=True, smooth_method="none", force=True)
    return bleu.corpus_score([" ".join(h) for h in hyps], [[" ".join(r) for r in refs]]).score


@pytest.mark.parametrize(
    "text, expected",
    [("abcdefgh", 0), ("abcdefg abcdefg", 1), ("a" * 14, 1), ("a" * 13, 0), ("a" * 21, 2)],
)
def test_rep_examples(text, expected):
    assert rep_count(text.split()) == expected


def test_rep_ignores_stop_words():
    assert rep_count("abcdefg der abcdefg".split(), {"der"}) == 1
    # without removal the separator changes nothing here, but a stop word can create a repeat
    assert rep_count("die die die die".split()) == 1
    assert rep_count("die die die die".split(), {"die"}) == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["haus", "hausen", "baum", "abc"]), max_size=8), st.data())
def test_rep_invariant_under_stop_word_insertion(tokens, data):
    stop = {"und", "der"}
    noisy = list(tokens)
    for word in data.draw(st.lists(st.sampled_from(sorted(stop)), max_size=4)):
        noisy.insert(data.draw(st.integers(0, len(noisy))), word)
    assert rep_count(noisy, stop) == rep_count(tokens, stop)


def test_bleu_identity_and_zero():
    corpus = [["the", "cat", "sat", "on", "the", "mat"], ["a", "b", "c", "d"]]
    assert corpus_bleu(corpus, corpus) == 100.0
    assert corpus_bleu([["x", "y", "z", "w"]], [["a", "b", "c", "d"]]) == 0.0
    with pytest.raises(ValueError):
        corpus_bleu([], [])
    with pytest.raises(ValueError):
        corpus_bleu([["a"]], [])


def test_bleu_lowercases():
    assert corpus_bleu([["The", "Cat", "sat", "down"]], [["the", "cat", "sat", "down"]]) == 100.0


def test_bleu_worked_example():
    hyp, ref = [["the", "the", "cat"]], [["the", "cat", "sat"]]
    # only two of three unigrams can match and no trigram exists, so unsmoothed BLEU is 0
    assert corpus_bleu(hyp, ref) == pytest.approx(oracle_bleu(hyp, ref), abs=0.1)


def random_corpus(rng: random.Random):
    words = [f"w{i}" for i in range(rng.randint(4, 12))]
    hyps, refs = [], []
    for _ in range(rng.randint(3, 15)):
        ref = [rng.choice(words) for _ in range(rng.randint(4, 14))]
        hyp = [t if rng.random() < 0.7 else rng.choice(words) for t in ref]
        if rng.random() < 0.3:
            hyp = hyp[: rng.randint(1, len(hyp))]
        refs.append(ref)
        hyps.append(hyp)
    return hyps, refs


@pytest.mark.parametrize("seed", range(20))
def test_bleu_matches_sacrebleu(seed):
    hyps, refs = random_corpus(random.Random(seed))
    assert corpus_bleu(hyps, refs) == pytest.approx(oracle_bleu(hyps, refs), abs=0.1)


@pytest.mark.parametrize("seed", range(5))
def test_bleu_permutation_invariant(seed):
    rng = random.Random(seed)
    hyps, refs = random_corpus(rng)
    pairs = list(zip(hyps, refs))
    rng.shuffle(pairs)
    shuffled = corpus_bleu([h for h, _ in pairs], [r for _, r in pairs])
    assert math.isclose(shuffled, corpus_bleu(hyps, refs), rel_tol=1e-12)


def test_length_ratio():
    assert length_ratio([["a", "b"], ["c"]], [["a"], ["b", "c", "d"]]) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        length_ratio([["a"]], [[]])


def test_satisfaction_rate():
    accs = [build_acceptor([ConstraintSpec.of("x", span=(0, 1))])] * 3
    outputs = [["x", "a"], ["a", "x"], ["a", "b"]]
    assert satisfaction_rate(outputs, accs) == pytest.approx(2 / 3)
    assert satisfaction_rate(outputs[:2], accs[:2]) == 1.0
    assert satisfaction_rate([], []) == 1.0


def test_evaluate_report():
    hyps = [["abcdefg", "abcdefg"], ["x"]]
    refs = [["abcdefg", "y"], ["x"]]
    accs = [build_acceptor([ConstraintSpec.of("abcdefg")]), build_acceptor([ConstraintSpec.of("z")])]
    report = evaluate(hyps, refs, acceptors=accs)
    assert report.rep == 1
    assert report.satisfaction == 0.5
    assert [s["satisfied"] for s in report.sentences] == [True, False]
    assert report.to_json()["length_ratio"] == 1.0


def runs():
    out = []
    for c, v1, v2 in [(2, 300, 150), (3, 800, 250), (4, 2000, 350)]:
        for mode, e in [("plain", 100), ("v1", v1), ("v2", v2)]:
            out.append({"mode": mode, "c": c, "expansions": e, "wall": e / 1000})
    return out


def test_speed_table():
    rows = speed_table(runs())
    base = [r for r in rows if r.mode == "plain"]
    assert all(r.expansion_ratio == 1.0 and r.wall_ratio == 1.0 for r in base)
    v1 = {r.c: r.expansion_ratio for r in rows if r.mode == "v1"}
    assert v1 == {2: pytest.approx(1 / 3), 3: pytest.approx(1 / 8), 4: pytest.approx(1 / 20)}
    assert ratio_between(rows, "v1", "v2") == {2: 2.0, 3: 3.2, 4: pytest.approx(2000 / 350)}
    assert format_speed_table(rows).splitlines()[0].startswith("mode")


def test_speed_table_without_baseline():
    rows = speed_table([{"mode": "v1", "c": 1, "expansions": 5, "wall": 1.0}])
    assert math.isnan(rows[0].expansion_ratio)
