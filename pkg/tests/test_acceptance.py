"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected in ``RESULTS`` and printed at the end of the pytest
run by the hook in ``conftest.py``.  Run directly with
``python tests/test_acceptance.py`` for the same report.
"""

import io
import random
import sys
import time
from contextlib import contextmanager
from decimal import ROUND_HALF_UP, Decimal

import pytest

from corpusforge.cleaning import FilterPolicy, run_clean_pipeline
from corpusforge.corpus import SentencePair, read_records, write_records
from corpusforge.metrics import bleu, chrf, span_f1, spearman, ter
from corpusforge.orchestrate import align_sentences, iterative_back_translate, pivot_translate
from corpusforge.backends import ScriptedScorer, StubTranslator
from corpusforge.perturb import ALL_KINDS, PerturbationPlan, PerturbationKind as K, apply_perturbations, derive_seed
from corpusforge.pipeline import Mono, SynthSpec, map_ordered
from corpusforge.tasks import (
    DAScoreInputs,
    RecordSkipped,
    make_ape_record,
    make_error_mark_and_correct_record,
    make_grammar_record,
    make_translation_record,
    parse_spans,
    strip_tags,
    synth_da,
    synth_da_score,
    synth_error_mark,
)
from corpusforge.text import tokenize

from helpers import (
    ENG,
    HIN,
    PAPER_TASK_STRINGS,
    TEL,
    bt_fixture,
    cleaning_fixture,
    eligible,
    gen_pair,
    gen_text,
    resources,
    seven_records,
    superincreasing_alignment,
)
from metric_cases import RANK_CASES, SPAN_CASES, TEXT_CASES
from oracles import best_monotone_matching, bleu_oracle, chrf_oracle, span_f1_oracle, spearman_ties, ter_oracle

RESULTS = {}

TOL = 1e-6


@contextmanager
def criterion(n, title):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        RESULTS[n] = f"[FAIL] {n:>2}. {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        raise
    RESULTS.setdefault(n, f"[PASS] {n:>2}. {title} ({time.perf_counter() - t0:.2f}s)")


def _budget_oracle(rate, n):
    # decimal arithmetic avoids binary float rounding at .5
    return max(1, int((Decimal(str(rate)) * n).quantize(Decimal(1), rounding=ROUND_HALF_UP)))


def test_01_metric_oracle_equivalence():
    with criterion(1, "metric oracle equivalence"):
        assert len(TEXT_CASES) == 20
        hyps, refs = zip(*TEXT_CASES)
        # time the metric suite itself; the brute-force oracles are slow by design
        t0 = time.perf_counter()
        got = [(bleu([h], [r]), chrf(h, r), ter(h, r)) for h, r in TEXT_CASES]
        corpus = bleu(hyps, refs)
        spans = [span_f1(p, g, n) for p, g, n in SPAN_CASES]
        ranks = [spearman(xs, ys) for xs, ys in RANK_CASES]
        elapsed = time.perf_counter() - t0
        for (h, r), (b, c, t) in zip(TEXT_CASES, got):
            assert abs(b - bleu_oracle([h], [r])) <= TOL, (h, r)
            assert abs(c - chrf_oracle(h, r)) <= TOL, (h, r)
            assert abs(t - ter_oracle(h, r)) <= TOL, (h, r)
        assert abs(corpus - bleu_oracle(hyps, refs)) <= TOL
        for (pred, gold, _), v in zip(SPAN_CASES, spans):
            assert abs(v - span_f1_oracle(pred, gold)) <= TOL
        for (xs, ys), v in zip(RANK_CASES, ranks):
            assert abs(v - spearman_ties(xs, ys)) <= TOL
        # identity cases are exact
        for h, _ in TEXT_CASES:
            assert bleu([h], [h]) == 100.0
            assert chrf(h, h) == 100.0
            assert ter(h, h) == 0.0
        assert span_f1([(1, 3)], [(1, 3)], 4) == 1.0
        assert span_f1([(0, 1)], [(2, 3)], 4) == 0.0
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
        assert elapsed < 5.0, f"{elapsed:.2f}s"
        RESULTS[1] = f"[PASS]  1. metric oracle equivalence (metrics {elapsed:.3f}s, limit 5s)"


def test_02_perturbation_budget_and_determinism():
    with criterion(2, "perturbation budget and determinism"):
        t0 = time.perf_counter()
        rng = random.Random(2024)
        lex, res = resources().lexicons, resources()
        texts = [gen_text(rng) for _ in range(1000)]
        cases = bad = 0
        for k, text in enumerate(texts):
            n = len(tokenize(text))
            for kind in ALL_KINDS:
                elig = eligible(kind, text)
                for rate in (0.02, 0.05, 0.15):
                    plan = PerturbationPlan((kind,), rate, derive_seed(7, str(k)), ENG)
                    _, log = apply_perturbations(text, plan, lex, res.trie(ENG))
                    cases += 1
                    if log.edited_positions != min(_budget_oracle(rate, n), elig):
                        bad += 1
        assert cases == 33000
        assert bad == 0, f"{bad} of {cases} cases off budget"
        items = [Mono(str(k), ENG, t) for k, t in enumerate(texts)]
        spec = SynthSpec("perturb", 11, 0.15, tuple(k.value for k in ALL_KINDS), None)
        serial = list(map_ordered(spec, items, 64, 1))
        parallel = list(map_ordered(spec, items, 64, 2))
        assert serial == parallel
        assert list(map_ordered(spec, items, 128, 1)) == serial
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0, f"{elapsed:.2f}s"


def test_03_span_fidelity():
    with criterion(3, "span fidelity"):
        rng = random.Random(3)
        lex, trie = resources().lexicons, resources().trie(HIN)
        kinds = resources().available_kinds(HIN)
        done = k = 0
        while done < 10_000:
            pair = gen_pair(rng, k)
            k += 1
            try:
                out = synth_error_mark(pair, PerturbationPlan(kinds, 0.15, k, HIN), lex, trie)
            except RecordSkipped:
                continue
            marked = out.record.output["error marked CentralIndic+hin_Deva"]
            assert strip_tags(marked) == out.perturbed, pair.id
            plain, spans = parse_spans(marked)
            assert span_f1(spans, out.log.error_spans(), len(tokenize(plain))) == 1.0, pair.id
            done += 1
        assert k - done < 100, f"{k - done} skipped"


def test_04_clean_side_integrity():
    with criterion(4, "clean-side integrity"):
        rng = random.Random(4)
        lex = resources().lexicons
        kinds = {tag: resources().available_kinds(tag) for tag in (ENG, HIN)}
        done = {"ape": 0, "gec": 0, "errmark-correct": 0}
        k = 0
        while sum(done.values()) < 10_000:
            task = ("ape", "gec", "errmark-correct")[k % 3]
            k += 1
            try:
                if task == "gec":
                    text = gen_text(rng, ENG, 3)
                    rec = make_grammar_record(text, ENG, PerturbationPlan(kinds[ENG], 0.1, k, ENG), lex, resources().trie(ENG))
                    assert rec.output["Corrected WestGermanic+eng_Latn"] == text
                else:
                    pair = gen_pair(rng, k)
                    plan = PerturbationPlan(kinds[HIN], 0.1, k, HIN)
                    make = make_ape_record if task == "ape" else make_error_mark_and_correct_record
                    rec = make(pair, plan, lex, resources().trie(HIN))
                    assert rec.output["post edited CentralIndic+hin_Deva"] == pair.tgt_text
            except RecordSkipped:
                continue
            done[task] += 1
        assert min(done.values()) >= 3000, done


def test_05_da_score_law():
    with criterion(5, "DA score law"):
        cs = 80.0
        eps = list(range(5, 55, 5))
        arith = [synth_da_score(DAScoreInputs("s", "t", "u", float(e), cs, float(e))) for e in eps]
        assert all(a > b for a, b in zip(arith, arith[1:])), arith
        # end to end: one spelling edit per 5% of a 20-token target
        words = " ".join(f"w{c}ord{c}" for c in "abcdefghijklmnopqrst")
        pair = SentencePair("1", HIN, ENG, "स्रोत", words)
        e2e = []
        for e in eps:
            out = synth_da(pair, PerturbationPlan((K.spelling,), e / 100, 5, ENG), cs)
            assert out.inputs.error_pct == e
            assert out.inputs.ter_pct == pytest.approx(e)
            e2e.append(out.score)
        assert all(a > b for a, b in zip(e2e, e2e[1:])), e2e
        assert synth_da_score(DAScoreInputs("s", "t", "t", 0.0, cs, 0.0)) == cs
        rng = random.Random(5)
        for _ in range(2000):
            v = synth_da_score(DAScoreInputs("s", "t", "u", rng.uniform(0, 100), rng.uniform(1, 100), rng.uniform(0, 400)))
            assert 1.0 <= v <= 100.0


def test_06_cleaning_stack():
    with criterion(6, "cleaning stack"):
        pairs, scorer, expected = cleaning_fixture()
        res = run_clean_pipeline(pairs, FilterPolicy(), scorer=scorer)
        got = res.stats.to_json()
        assert got["rejected_by_reason"] == expected, got
        assert got["kept"] == 740 and len(res.kept) == 740


def test_07_protocol_fidelity():
    with criterion(7, "protocol fidelity"):
        recs = seven_records()
        assert {t: r.task for t, r in recs.items()} == PAPER_TASK_STRINGS
        rng = random.Random(7)
        lex, trie = resources().lexicons, resources().trie(HIN)
        kinds = resources().available_kinds(HIN)
        gen, k = [], 0
        while len(gen) < 1000:
            pair = gen_pair(rng, k)
            plan = PerturbationPlan(kinds, 0.1, k, HIN)
            make = (make_translation_record, make_ape_record, make_error_mark_and_correct_record)[k % 3]
            k += 1
            try:
                gen.append(make(pair) if make is make_translation_record else make(pair, plan, lex, trie))
            except RecordSkipped:
                pass
        buf = io.BytesIO()
        write_records(gen, buf)
        back = list(read_records(io.BytesIO(buf.getvalue())))
        assert back == gen
        again = io.BytesIO()
        write_records(back, again)
        assert again.getvalue() == buf.getvalue()


def test_08_orchestration_selection():
    with criterion(8, "orchestration selection"):
        texts, factory, scorer, expected = bt_fixture(n=100, rounds=5, seed=8)
        pairs, state = iterative_back_translate(texts, ENG, HIN, factory, scorer, rounds=5)
        assert [b[2] for b in state.best] == expected
        assert [p.src_text for p in pairs] == [f"{t} @r{r}" for t, r in zip(texts, expected)]
        src = [SentencePair(str(k), TEL, ENG, f"x{k}", f"pivot {k}") for k in range(200)]
        rng = random.Random(8)
        scores = {f"x{k}": float(rng.randint(1, 100)) for k in range(200)}
        res = pivot_translate(src, ENG, HIN, StubTranslator(), ScriptedScorer(fn=lambda s, t: scores[s]), batch_size=16)
        mean = sum(scores.values()) / len(scores)
        assert [p.src_text for p in res.pairs] == [s for s, v in scores.items() if v >= mean]


def test_09_alignment_oracle():
    with criterion(9, "alignment oracle"):
        rng = random.Random(9)
        count = 0
        for n in range(1, 7):
            for m in range(1, 7):
                for band in (1, 2, 3, 6):
                    for _ in range(3):
                        src, tgt, scorer, scores = superincreasing_alignment(rng, n, m, band)
                        al = align_sentences(src, tgt, scorer, 0.0, ENG, HIN, band=band)
                        assert {(a.src, a.tgt) for a in al} == best_monotone_matching(scores), (n, m, band)
                        count += 1
        assert count == 432
        for _ in range(500):
            n, m = rng.randint(1, 12), rng.randint(1, 12)
            sc = ScriptedScorer(fn=lambda s, t: float(rng.randint(1, 100)))
            al = align_sentences([f"s{i}" for i in range(n)], [f"t{j}" for j in range(m)], sc, rng.uniform(0, 50), ENG, HIN, band=rng.randint(1, 6))
            assert all(a.src < b.src and a.tgt < b.tgt for a, b in zip(al, al[1:]))
            assert len({a.src for a in al}) == len({a.tgt for a in al}) == len(al)


TARGET_RATE = 100_000


def test_10_throughput_soft():
    # soft: the rate is reported, a shortfall is flagged but never fails the run
    pairs, _, _ = cleaning_fixture(n=20000, length=1000, script=500, markup=300, low_qe=0, seed=10)
    assert max(max(len(p.src_text.split()), len(p.tgt_text.split())) for p in pairs) <= 30
    policy = FilterPolicy(stages=("length", "language_script", "markup"))
    best = 0.0
    for _ in range(3):
        t0 = time.perf_counter()
        res = run_clean_pipeline(pairs, policy)
        best = max(best, len(pairs) / (time.perf_counter() - t0))
    assert res.stats.to_json()["kept"] == 18200
    status = "PASS" if best >= TARGET_RATE else "FLAG"
    note = "" if status == "PASS" else " (soft target missed, flagged regression)"
    RESULTS[10] = f"[{status}] 10. throughput: {best:,.0f} pairs/s single-threaded vs target {TARGET_RATE:,}{note}"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
