import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrnn.bleu import bleu, bleu_report

CANDS = [
    "the cat sat on the mat".split(),
    "there is a dog".split(),
]
REFS = [
    ["the cat sat on a mat".split()],
    ["there is a big dog here".split()],
]


def test_perfect_match():
    sents = [["a", "b", "c", "d", "e"], ["x", "y", "z", "w"]]
    report = bleu_report(sents, [[s] for s in sents])
    assert report == {"bleu1": 1.0, "bleu2": 1.0, "bleu3": 1.0, "bleu4": 1.0}


def test_short_perfect_match_scores_one():
    sents = [["a", "b", "c"], ["d", "e"]]
    assert bleu(sents, [[s] for s in sents], 4) == 1.0
    assert bleu([["a", "x"]], [[["a", "b"]]], 4) == bleu([["a", "x"]], [[["a", "b"]]], 2) == 0.0


def test_no_shared_unigrams():
    assert bleu([["a", "b"]], [[["c", "d"]]], n=1) == 0.0


def test_hand_counted_example():
    # Clipped matches per order over both sentences (10 candidate tokens):
    # unigrams 5/6 + 4/4, bigrams 3/5 + 2/3, trigrams 2/4 + 1/2, 4-grams 1/3 + 0/1.
    p = [9 / 10, 5 / 8, 3 / 6, 1 / 4]
    bp = math.exp(1 - 12 / 10)
    for n in range(1, 5):
        expected = bp * math.exp(sum(math.log(x) for x in p[:n]) / n)
        assert abs(bleu(CANDS, REFS, n) - expected) <= 1e-9


def test_clipping():
    assert bleu([["the"] * 4], [[["the", "cat"]]], n=1) == pytest.approx(0.25)


def test_brevity_uses_closest_reference():
    cand = [["a", "b", "c"]]
    refs = [[["a", "b", "c", "d", "e", "f"], ["a", "b", "c", "x"]]]
    assert bleu(cand, refs, n=1) == pytest.approx(math.exp(1 - 4 / 3))


def test_smoothing_only_when_asked():
    assert bleu(CANDS[1:], REFS[1:], n=4) == 0.0
    assert bleu(CANDS[1:], REFS[1:], n=4, smooth=True) > 0.0


def test_count_mismatch_and_order():
    with pytest.raises(ValueError):
        bleu(CANDS, REFS[:1])
    with pytest.raises(ValueError):
        bleu(CANDS, REFS, n=5)


words = st.lists(st.sampled_from("abcde"), min_size=1, max_size=7)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(words, st.lists(words, min_size=1, max_size=2)), min_size=1, max_size=5), st.randoms())
def test_permutation_invariant_and_bounded(pairs, rnd):
    cands, refs = [p[0] for p in pairs], [p[1] for p in pairs]
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    for n in range(1, 5):
        a = bleu(cands, refs, n)
        b = bleu([p[0] for p in shuffled], [p[1] for p in shuffled], n)
        assert a == pytest.approx(b, abs=1e-12)
        assert 0.0 <= a <= 1.0 + 1e-12
