"""BLEU, chrF, TER, error-span F1 and Spearman correlation.

All token-level metrics use :func:`corpusforge.text.tokenize` on NFC text, so
token coordinates agree with the perturbation engine and span markup.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .text import nfc, tokenize

BLEU_EPSILON = 1e-9
MAX_SHIFT_SIZE = 10


class MetricError(ValueError):
    pass


class UndefinedCorrelation(MetricError):
    """Spearman correlation is undefined for a constant input."""


def _toks(text: str) -> List[str]:
    return [t.text for t in tokenize(nfc(text))]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------- BLEU


def bleu_stats(candidate: str, reference: str, max_n: int = 4) -> List[int]:
    """[cand_len, ref_len, match_1, total_1, ..., match_n, total_n]."""
    c, r = _toks(candidate), _toks(reference)
    stats = [len(c), len(r)]
    for n in range(1, max_n + 1):
        cn, rn = _ngrams(c, n), _ngrams(r, n)
        stats.append(sum(min(k, rn[g]) for g, k in cn.items()))
        stats.append(max(len(c) - n + 1, 0))
    return stats


def bleu_from_stats(stats: Sequence[int], max_n: int = 4) -> float:
    c, r = stats[0], stats[1]
    if c == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(max_n):
        m, t = stats[2 + 2 * n], stats[3 + 2 * n]
        if t == 0:
            # no candidate n-grams of this order at all
            continue
        p = m / t if m > 0 else BLEU_EPSILON
        log_sum += math.log(p)
        orders += 1
    if orders == 0:
        return 0.0
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(log_sum / orders)


def bleu(candidates: Sequence[str], references: Sequence[str], max_n: int = 4) -> float:
    """Corpus BLEU-4 with clipped counts, brevity penalty and epsilon smoothing.

    Zero-match orders use precision 1e-9; orders for which the candidate
    side has no n-grams at all are left out of the geometric mean.
    """
    if len(candidates) != len(references):
        raise MetricError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise MetricError("bleu needs at least one segment")
    total = [0] * (2 + 2 * max_n)
    for cand, ref in zip(candidates, references):
        for i, v in enumerate(bleu_stats(cand, ref, max_n)):
            total[i] += v
    return bleu_from_stats(total, max_n)


# ---------------------------------------------------------------- chrF


def _fbeta(p: float, r: float, beta: float) -> float:
    if p + r == 0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * p * r / (b2 * p + r)


def chrf(candidate: str, reference: str, beta: float = 3.0, n: int = 6) -> float:
    """Character n-gram F-beta, averaged over orders 1..n, whitespace removed.

    Orders where neither side has any n-gram are skipped; if only one side
    has n-grams of an order, that order scores 0.
    """
    hyp = "".join(nfc(candidate).split())
    ref = "".join(nfc(reference).split())
    scores = []
    for k in range(1, n + 1):
        hc = Counter(hyp[i : i + k] for i in range(len(hyp) - k + 1))
        rc = Counter(ref[i : i + k] for i in range(len(ref) - k + 1))
        ht, rt = sum(hc.values()), sum(rc.values())
        if ht == 0 and rt == 0:
            continue
        if ht == 0 or rt == 0:
            scores.append(0.0)
            continue
        match = sum(min(v, rc[g]) for g, v in hc.items())
        scores.append(_fbeta(match / ht, match / rt, beta))
    if not scores:
        return 100.0 if hyp == ref else 0.0
    return 100.0 * sum(scores) / len(scores)


def corpus_chrf(candidates: Sequence[str], references: Sequence[str], beta: float = 3.0) -> float:
    if len(candidates) != len(references) or not candidates:
        raise MetricError("chrf needs equal, non-empty candidate and reference lists")
    return sum(chrf(c, r, beta) for c, r in zip(candidates, references)) / len(candidates)


# ---------------------------------------------------------------- TER


def edit_distance(hyp: Sequence[str], ref: Sequence[str]) -> int:
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, 1):
        cur = [i] + [0] * len(ref)
        for j, r in enumerate(ref, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (h != r))
        prev = cur
    return prev[-1]


def _apply_shift(words: Sequence[str], start: int, length: int, dest: int) -> List[str]:
    block = list(words[start : start + length])
    rest = list(words[:start]) + list(words[start + length :])
    return rest[:dest] + block + rest[dest:]


def _best_shift(hyp: List[str], ref: List[str], cost: int) -> Tuple[int, Optional[List[str]]]:
    ref_pos: Dict[Tuple[str, ...], List[int]] = {}
    for length in range(1, min(MAX_SHIFT_SIZE, len(ref)) + 1):
        for j in range(len(ref) - length + 1):
            ref_pos.setdefault(tuple(ref[j : j + length]), []).append(j)
    best_gain, best = 0, None
    seen = set()
    for start in range(len(hyp)):
        for length in range(1, min(MAX_SHIFT_SIZE, len(hyp) - start) + 1):
            block = tuple(hyp[start : start + length])
            positions = ref_pos.get(block)
            if positions is None:
                break
            for j in positions:
                if j == start:
                    continue
                for dest in (j - 1, j, j + 1):
                    if dest < 0 or dest > len(hyp) - length or dest == start:
                        continue
                    key = (start, length, dest)
                    if key in seen:
                        continue
                    seen.add(key)
                    cand = _apply_shift(hyp, start, length, dest)
                    gain = cost - edit_distance(cand, ref)
                    if gain > best_gain:
                        best_gain, best = gain, cand
    return best_gain, best


def ter_edits(hypothesis: Sequence[str], reference: Sequence[str]) -> int:
    """Greedy shift search (one shift at a time, best gain first) plus edit distance."""
    hyp, ref = list(hypothesis), list(reference)
    shifts = 0
    cost = edit_distance(hyp, ref)
    while cost > 0:
        gain, cand = _best_shift(hyp, ref, cost)
        if cand is None:
            break
        hyp = cand
        cost -= gain
        shifts += 1
    return shifts + cost


def ter(hypothesis: str, reference: str) -> float:
    """Translation error rate in percent (may exceed 100)."""
    ref = _toks(reference)
    if not ref:
        raise MetricError("TER reference is empty")
    return 100.0 * ter_edits(_toks(hypothesis), ref) / len(ref)


def corpus_ter(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    if len(hypotheses) != len(references) or not hypotheses:
        raise MetricError("ter needs equal, non-empty hypothesis and reference lists")
    edits = ref_len = 0
    for h, r in zip(hypotheses, references):
        rt = _toks(r)
        if not rt:
            raise MetricError("TER reference is empty")
        edits += ter_edits(_toks(h), rt)
        ref_len += len(rt)
    return 100.0 * edits / ref_len


# ---------------------------------------------------------------- spans


class SpanSet(tuple):
    """Sorted, non-overlapping ``[start, end)`` token intervals."""

    def __new__(cls, spans: Iterable[Tuple[int, int]] = ()):
        items = tuple(sorted((int(s), int(e)) for s, e in spans))
        prev_end = None
        for s, e in items:
            if e <= s or s < 0:
                raise MetricError(f"invalid span [{s},{e})")
            if prev_end is not None and s < prev_end:
                raise MetricError(f"overlapping span [{s},{e})")
            prev_end = e
        return super().__new__(cls, items)

    def positions(self) -> set:
        return {i for s, e in self for i in range(s, e)}


def span_f1(predicted: Sequence[Tuple[int, int]], gold: Sequence[Tuple[int, int]], length: int) -> float:
    """Token-level F1 between the index sets covered by two span sets."""
    p, g = SpanSet(predicted), SpanSet(gold)
    for s, e in tuple(p) + tuple(g):
        if e > length:
            raise MetricError(f"span [{s},{e}) beyond text length {length}")
    ps, gs = p.positions(), g.positions()
    if not ps and not gs:
        return 1.0
    if not ps or not gs:
        return 0.0
    tp = len(ps & gs)
    if tp == 0:
        return 0.0
    prec, rec = tp / len(ps), tp / len(gs)
    return 2 * prec * rec / (prec + rec)


# ---------------------------------------------------------------- Spearman


def average_ranks(xs: Sequence[float]) -> List[float]:
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average-tie ranks."""
    if len(xs) != len(ys):
        raise MetricError("spearman needs equal-length inputs")
    if len(xs) < 2:
        raise MetricError("spearman needs at least two points")
    rx, ry = average_ranks(xs), average_ranks(ys)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    dx = [a - mx for a in rx]
    dy = [b - my for b in ry]
    sxx = sum(a * a for a in dx)
    syy = sum(b * b for b in dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("constant input vector")
    rho = sum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))
