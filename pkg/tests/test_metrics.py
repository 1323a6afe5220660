import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpusforge.metrics import (
    MetricError,
    SpanSet,
    UndefinedCorrelation,
    bleu,
    chrf,
    corpus_ter,
    span_f1,
    spearman,
    ter,
)

from metric_cases import RANK_CASES, SPAN_CASES, TEXT_CASES
from oracles import (
    bleu_oracle,
    chrf_oracle,
    span_f1_oracle,
    spearman_no_ties,
    spearman_ties,
    ter_oracle,
    toks,
)


@pytest.mark.parametrize("hyp,ref", TEXT_CASES)
def test_bleu_matches_oracle(hyp, ref):
    assert bleu([hyp], [ref]) == pytest.approx(bleu_oracle([hyp], [ref]), abs=1e-6)


def test_corpus_bleu_matches_oracle():
    hyps, refs = zip(*TEXT_CASES)
    assert bleu(hyps, refs) == pytest.approx(bleu_oracle(hyps, refs), abs=1e-6)


@pytest.mark.parametrize("hyp,ref", TEXT_CASES)
def test_chrf_matches_oracle(hyp, ref):
    assert chrf(hyp, ref) == pytest.approx(chrf_oracle(hyp, ref), abs=1e-6)


@pytest.mark.parametrize("hyp,ref", TEXT_CASES)
def test_ter_matches_exhaustive_oracle(hyp, ref):
    assert ter(hyp, ref) == pytest.approx(ter_oracle(hyp, ref), abs=1e-6)


@pytest.mark.parametrize("pred,gold,n", SPAN_CASES)
def test_span_f1_matches_oracle(pred, gold, n):
    assert span_f1(pred, gold, n) == pytest.approx(span_f1_oracle(pred, gold), abs=1e-6)


@pytest.mark.parametrize("xs,ys", RANK_CASES)
def test_spearman_matches_oracle(xs, ys):
    assert spearman(xs, ys) == pytest.approx(spearman_ties(xs, ys), abs=1e-6)


def test_bleu_examples():
    assert bleu(["a b c d e"], ["a b c d e"]) == 100.0
    assert bleu(["x y z w"], ["a b c d"]) == pytest.approx(0.0, abs=1e-6)
    # 3/3 precisions for n<=3, no 4-grams, brevity penalty exp(1 - 6/3)
    assert bleu(["the cat sat"], ["the cat sat on the mat"]) == pytest.approx(100 * 2.718281828459045 ** -1, abs=1e-6)


def test_bleu_length_mismatch():
    with pytest.raises(MetricError):
        bleu(["a"], ["a", "b"])


def test_bleu_row_order_invariant():
    hyps, refs = zip(*TEXT_CASES)
    idx = list(range(len(hyps)))
    random.Random(3).shuffle(idx)
    assert bleu([hyps[i] for i in idx], [refs[i] for i in idx]) == pytest.approx(bleu(hyps, refs), abs=1e-9)


def test_chrf_examples():
    assert chrf("anything at all", "anything at all") == 100.0
    assert chrf("abc", "xyz") == 0.0
    assert chrf("abcd", "abce") == pytest.approx(chrf_oracle("abcd", "abce"), abs=1e-6)


def test_chrf_is_not_symmetric():
    a, b = "the cat", "the cat sat on the mat"
    assert chrf(a, b) != pytest.approx(chrf(b, a), abs=1e-3)


def test_ter_examples():
    assert ter("a b c", "a b c") == 0.0
    assert ter("a b x d e", "a b c d e") == 20.0
    assert ter("a b c d e f g h i j k l", "a") > 100


def test_ter_empty_reference():
    with pytest.raises(MetricError):
        ter("a", "   ")


def test_ter_zero_iff_equal_tokens():
    assert ter("a , b", "a, b") == 0.0
    assert ter("a b", "b a") > 0


def test_corpus_ter_is_pooled():
    assert corpus_ter(["a b x d e", "a b"], ["a b c d e", "a b"]) == pytest.approx(100 / 7)


def test_span_examples():
    assert span_f1([(1, 3)], [(1, 3)], 4) == 1.0
    assert span_f1([(0, 1)], [(2, 3)], 4) == 0.0
    # {1,2} vs {2,3}
    assert span_f1([(1, 3)], [(2, 4)], 5) == pytest.approx(0.5)
    assert span_f1([], [], 3) == 1.0
    assert span_f1([(0, 1)], [], 3) == 0.0


@pytest.mark.parametrize("bad", [[(2, 2)], [(3, 1)], [(0, 2), (1, 3)], [(-1, 1)]])
def test_invalid_spans(bad):
    with pytest.raises(MetricError):
        SpanSet(bad)


def test_span_beyond_length():
    with pytest.raises(MetricError):
        span_f1([(0, 4)], [], 3)


def test_spearman_examples():
    assert spearman([1, 2, 3], [1, 2, 3]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    assert spearman_no_ties([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_spearman_constant_is_distinct_error():
    with pytest.raises(UndefinedCorrelation):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(MetricError):
        spearman([1], [1])


words = st.lists(st.sampled_from(["a", "b", "c", "d", ",", "."]), min_size=1, max_size=7).map(" ".join)


@settings(max_examples=150, deadline=None)
@given(words, words)
def test_metric_bounds(h, r):
    assert 0.0 <= bleu([h], [r]) <= 100.0
    assert 0.0 <= chrf(h, r) <= 100.0
    t = ter(h, r)
    assert t >= 0.0
    assert (t == 0.0) == (toks(h) == toks(r))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=5).map(" ".join), st.lists(st.sampled_from("abc"), min_size=1, max_size=5).map(" ".join))
def test_ter_never_below_exact_optimum(h, r):
    # greedy search can only overshoot the exact minimum
    assert ter(h, r) >= ter_oracle(h, r) - 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=8), st.data())
def test_spearman_bounds_and_oracle(xs, data):
    ys = data.draw(st.lists(st.floats(-100, 100), min_size=len(xs), max_size=len(xs)))
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        with pytest.raises(UndefinedCorrelation):
            spearman(xs, ys)
        return
    rho = spearman(xs, ys)
    assert -1.0 <= rho <= 1.0
    assert rho == pytest.approx(spearman_ties(xs, ys), abs=1e-9)
