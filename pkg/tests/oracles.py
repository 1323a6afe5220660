"""Brute-force reference implementations used only by the tests.

Written independently of corpusforge.metrics: plain lists and loops, no
shared helpers apart from the tokenizer (token coordinates must agree).
"""

from __future__ import annotations

import math
from functools import lru_cache

from corpusforge.text import nfc, tokenize


def toks(s):
    return [t.text for t in tokenize(nfc(s))]


def ngram_list(seq, n):
    return [tuple(seq[i : i + n]) for i in range(len(seq) - n + 1)]


def bleu_oracle(cands, refs, max_n=4, eps=1e-9):
    c_len = r_len = 0
    match = [0] * max_n
    total = [0] * max_n
    for c, r in zip(cands, refs):
        ct, rt = toks(c), toks(r)
        c_len += len(ct)
        r_len += len(rt)
        for n in range(1, max_n + 1):
            cg, rg = ngram_list(ct, n), ngram_list(rt, n)
            for g in set(cg):
                match[n - 1] += min(cg.count(g), rg.count(g))
            total[n - 1] += len(cg)
    if c_len == 0:
        return 0.0
    logs = []
    for m, t in zip(match, total):
        if t == 0:
            continue
        logs.append(math.log(m / t) if m else math.log(eps))
    if not logs:
        return 0.0
    bp = 1.0 if c_len >= r_len else math.exp(1 - r_len / c_len)
    return 100 * bp * math.exp(sum(logs) / len(logs))


def chrf_oracle(hyp, ref, beta=3.0, max_n=6):
    h = "".join(nfc(hyp).split())
    r = "".join(nfc(ref).split())
    fs = []
    for n in range(1, max_n + 1):
        hg = [h[i : i + n] for i in range(len(h) - n + 1)]
        rg = [r[i : i + n] for i in range(len(r) - n + 1)]
        if not hg and not rg:
            continue
        if not hg or not rg:
            fs.append(0.0)
            continue
        m = sum(min(hg.count(g), rg.count(g)) for g in set(hg))
        p, rc = m / len(hg), m / len(rg)
        fs.append(0.0 if m == 0 else (1 + beta**2) * p * rc / (beta**2 * p + rc))
    if not fs:
        return 100.0 if h == r else 0.0
    return 100 * sum(fs) / len(fs)


def levenshtein(a, b):
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def all_shifts(seq):
    """Every sequence reachable by moving one contiguous block anywhere else."""
    n = len(seq)
    out = set()
    for s in range(n):
        for ln in range(1, n - s + 1):
            block = seq[s : s + ln]
            rest = seq[:s] + seq[s + ln :]
            for d in range(len(rest) + 1):
                cand = rest[:d] + block + rest[d:]
                if cand != seq:
                    out.add(cand)
    return out


def ter_exact_edits(hyp, ref, max_shifts=3):
    """min over shift sequences (breadth first, up to max_shifts) of shifts + edit distance."""
    hyp, ref = tuple(hyp), tuple(ref)
    best = levenshtein(hyp, ref)
    frontier = {hyp}
    seen = {hyp}
    for depth in range(1, max_shifts + 1):
        if depth >= best:
            break
        nxt = set()
        for seq in frontier:
            for cand in all_shifts(seq):
                if cand in seen:
                    continue
                seen.add(cand)
                nxt.add(cand)
                best = min(best, depth + levenshtein(cand, ref))
        frontier = nxt
    return best


def ter_oracle(hyp, ref, max_shifts=3):
    r = toks(ref)
    return 100.0 * ter_exact_edits(toks(hyp), r, max_shifts) / len(r)


def span_f1_oracle(pred, gold):
    p = {i for s, e in pred for i in range(s, e)}
    g = {i for s, e in gold for i in range(s, e)}
    if not p and not g:
        return 1.0
    tp = len(p & g)
    if tp == 0:
        return 0.0
    prec, rec = tp / len(p), tp / len(g)
    return 2 * prec * rec / (prec + rec)


def spearman_no_ties(xs, ys):
    n = len(xs)
    rx = {v: k + 1 for k, v in enumerate(sorted(xs))}
    ry = {v: k + 1 for k, v in enumerate(sorted(ys))}
    d2 = sum((rx[a] - ry[b]) ** 2 for a, b in zip(xs, ys))
    return 1 - 6 * d2 / (n * (n * n - 1))


def spearman_ties(xs, ys):
    def ranks(v):
        return [sum(1 for u in v if u < x) + (sum(1 for u in v if u == x) + 1) / 2 for x in v]

    rx, ry = ranks(xs), ranks(ys)
    n = len(xs)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / math.sqrt(vx * vy)


def all_monotone_matchings(edges):
    """Every strictly monotone one-to-one subset of ``edges`` (sorted (i, j) pairs)."""
    edges = sorted(edges)
    out = [()]

    def extend(chain, start):
        for k in range(start, len(edges)):
            i, j = edges[k]
            if chain and not (i > chain[-1][0] and j > chain[-1][1]):
                continue
            nxt = chain + ((i, j),)
            out.append(nxt)
            extend(nxt, k + 1)

    extend((), 0)
    return out


def best_monotone_matching(scores, threshold=float("-inf")):
    """Exhaustive max-total-score strictly monotone one-to-one matching.

    ``scores`` maps (i, j) -> score.  Returns the set of chosen (i, j).
    """
    edges = [e for e, s in scores.items() if s >= threshold]
    best_val, best_set = 0.0, frozenset()
    for combo in all_monotone_matchings(edges):
        val = math.fsum(scores[e] for e in combo)
        if val > best_val:
            best_val, best_set = val, frozenset(combo)
    return best_set


def letter_script_counts(text, blocks):
    """Count letters (L*/M*) per script by linear scan over (lo, hi, script) blocks."""
    import unicodedata

    counts = {}
    total = 0
    for ch in text:
        if unicodedata.category(ch)[0] not in "LM":
            continue
        total += 1
        cp = ord(ch)
        for lo, hi, script in blocks:
            if lo <= cp <= hi:
                counts[script] = counts.get(script, 0) + 1
                break
    return counts, total
