"""Shared fixtures data and generators for the test suite."""

from __future__ import annotations

import random
from functools import lru_cache

from corpusforge.corpus import SentencePair
from corpusforge.lang_registry import parse_tag
from corpusforge.perturb import PerturbationKind as K
from corpusforge.pipeline import Resources
from corpusforge.text import is_punct, tokenize

ENG = parse_tag("WestGermanic+eng_Latn")
HIN = parse_tag("CentralIndic+hin_Deva")
TEL = parse_tag("Dravidian+tel_Telu")


@lru_cache(maxsize=None)
def resources() -> Resources:
    return Resources()


def lexicon(tag=ENG):
    return resources().lexicons.get(tag)


def trie(tag=ENG):
    return resources().trie(tag)


def _word_pool(tag):
    lex = lexicon(tag)
    t = trie(tag)
    pool = list(lex.pronouns) + list(lex.adpositions) + list(lex.connectives) + list(lex.verb_forms) + list(lex.tokens)
    pool += sorted(t.freq) if t is not None else []
    pool += ["alpha", "bravo", "kilo", "zulu", "42"] if tag == ENG else ["नदी", "पहाड़", "किताब", "सड़क"]
    return pool


def gen_text(rng: random.Random, tag=ENG, min_words=1, max_words=30) -> str:
    """Random sentence of lexicon words with sparse punctuation.

    Punctuation marks are never adjacent to each other so each mark keeps
    its own word neighbour for moves.
    """
    pool = _word_pool(tag)
    marks = list(lexicon(tag).punctuation)
    n = rng.randint(min_words, max_words)
    out = []
    last_punct = True
    for _ in range(n):
        if not last_punct and rng.random() < 0.12:
            out.append(rng.choice(marks))
            last_punct = True
        else:
            out.append(rng.choice(pool))
            last_punct = False
    # the joined text must tokenize back to the same tokens
    return " ".join(out)


def eligible(kind: K, text: str, tag=ENG) -> int:
    """Number of original token positions a single-kind plan could edit (static count)."""
    tokens = [t.text for t in tokenize(text)]
    lex = lexicon(tag)
    n = len(tokens)
    if kind is K.token_noise:
        return n
    if kind in (K.pronoun_swap, K.adposition_swap, K.connective_swap):
        words = {K.pronoun_swap: lex.pronouns, K.adposition_swap: lex.adpositions, K.connective_swap: lex.connectives}[kind]
        folded = {w.casefold() for w in words}
        return sum(1 for w in tokens if w.casefold() in folded) if len(folded) >= 2 else 0
    if kind is K.verb_form:
        return sum(1 for w in tokens if w in lex.verb_forms)
    if kind is K.lexical_cohesion:
        fw = {w.casefold() for w in lex.pronouns + lex.adpositions + lex.connectives}
        return sum(1 for w in tokens if not is_punct(w) and w.casefold() not in fw and any(p != w for p in lex.tokens))
    if kind is K.mask:
        return sum(1 for w in tokens if any(p != w for p in lex.tokens))
    if kind is K.grammar_inflect:
        t = trie(tag)
        return sum(1 for w in tokens if not is_punct(w) and t.query(w))
    if kind is K.spelling:
        return sum(1 for w in tokens if not is_punct(w))
    if kind is K.punctuation:
        return sum(1 for w in tokens if is_punct(w)) if n > 1 else 0
    if kind is K.word_order:
        # any two adjacent distinct tokens make every position reachable at low rates
        return n if any(a != b for a, b in zip(tokens, tokens[1:])) else 0
    raise AssertionError(kind)


def gen_pair(rng: random.Random, k: int, min_words=3, max_words=30) -> SentencePair:
    return SentencePair(str(k), ENG, HIN, gen_text(rng, ENG, min_words, max_words), gen_text(rng, HIN, min_words, max_words))


# the seven task strings as printed in the paper's record examples
PAPER_TASK_STRINGS = {
    "translation": "Translation$WestGermanic+eng_Latn#CentralIndic+hin_Deva",
    "gec": "Correction$Incorrect WestGermanic+eng_Latn#WestGermanic+eng_Latn",
    "ape": "Translation post editing$WestGermanic+eng_Latn#Dravidian+tel_Latn",
    "da": "Translation direct assessment$WestGermanic+eng_Latn#Dravidian+tel_Latn",
    "qe": "Translation quality estimation$WestGermanic+eng_Latn#Dravidian+tel_Latn",
    "errmark": "Translation error marking$WestGermanic+eng_Latn#Dravidian+tel_Latn",
    "errmark-correct": "Translation error marking and correction$WestGermanic+eng_Latn#Dravidian+tel_Latn",
}

TEL_LATN = parse_tag("Dravidian+tel_Latn")
EXAMPLE_SRC = "Light contrast contributes to this kind of animation and makes it more impressive."
EXAMPLE_TGT = "Laiṭ kāṇṭrāsṭ ī rakamaina yānimēṣan‌ku dōhadam cēstundi mariyu dānini marinta ākaṭṭukunēlā cēstundi."
EXAMPLE_GEC = "This committee, the whole state, again, where should be the capital?"


def seven_records(seed: int = 0):
    """One record per task, built from the paper's example sentences."""
    from corpusforge import tasks
    from corpusforge.perturb import PerturbationPlan

    plan = PerturbationPlan((K.spelling,), 0.1, seed, TEL_LATN)
    hin = SentencePair("1", ENG, HIN, EXAMPLE_SRC, "ये समिति, पूरा प्रदेश, फिर कहाँ हो राजधानी?")
    tel = SentencePair("2", ENG, TEL_LATN, EXAMPLE_SRC, EXAMPLE_TGT, domain="Computer science")
    da = tasks.synth_da(tel, PerturbationPlan((K.spelling,), 0.1, seed, TEL_LATN), 80.0)
    return {
        "translation": tasks.make_translation_record(hin),
        "gec": tasks.make_grammar_record(EXAMPLE_GEC, ENG, PerturbationPlan((K.spelling,), 0.1, seed, ENG)),
        "ape": tasks.make_ape_record(tel, plan),
        "da": da.da,
        "qe": da.qe,
        "errmark": tasks.make_error_mark_record(tel, plan),
        "errmark-correct": tasks.make_error_mark_and_correct_record(tel, plan),
    }


_ENG_WORDS = ("river", "stone", "green", "house", "market", "window", "garden", "letter", "morning", "silver")
_HIN_WORDS = ("नदी", "पत्थर", "हरा", "घर", "बाज़ार", "खिड़की", "बगीचा", "पत्र", "सुबह", "चाँदी")


def cleaning_fixture(n=1000, length=100, script=50, markup=30, low_qe=80, seed=0):
    """Pairs with disjoint, known violation sets plus a scorer that flags the low-QE set.

    Returns (pairs, scorer, expected rejected_by_reason).
    """
    from corpusforge.backends import ScriptedScorer

    rng = random.Random(seed)
    ids = list(range(n))
    rng.shuffle(ids)
    cuts = [length, length + script, length + script + markup, length + script + markup + low_qe]
    role = {}
    for k, i in enumerate(ids):
        role[i] = (
            "length" if k < cuts[0] else
            "language_script" if k < cuts[1] else
            "markup" if k < cuts[2] else
            "qe_score" if k < cuts[3] else
            None
        )
    pairs, low = [], set()
    for i in range(n):
        m = rng.randint(6, 12)
        src = [rng.choice(_ENG_WORDS) for _ in range(m)] + [f"n{i}"]
        tgt = [rng.choice(_HIN_WORDS) for _ in range(m)] + [str(i)]
        r = role[i]
        if r == "length":
            src = src[:3]
            tgt = tgt + [rng.choice(_HIN_WORDS) for _ in range(15)]
        elif r == "language_script":
            tgt = [rng.choice(_ENG_WORDS) for _ in range(m)] + [tgt[-1]]
        elif r == "markup":
            src = ["<b>"] + src + ["</b>"]
        s, t = " ".join(src), " ".join(tgt)
        if r == "qe_score":
            low.add((s, t))
        pairs.append(SentencePair(str(i + 1), ENG, HIN, s, t))
    scorer = ScriptedScorer(fn=lambda s, t: 20.0 if (s, t) in low else 90.0)
    expected = {"length": length, "language_script": script, "markup": markup, "qe_score": low_qe}
    return pairs, scorer, expected


def superincreasing_alignment(rng: random.Random, n: int, m: int, band: int):
    """Sentence lists and a scorer whose band scores are distinct powers of two.

    Each score exceeds the sum of all smaller ones, so best-first greedy
    selection is also the maximum-total matching.
    """
    from corpusforge.backends import ScriptedScorer
    from corpusforge.orchestrate import band_candidates

    src = [f"s{i}" for i in range(n)]
    tgt = [f"t{j}" for j in range(m)]
    cands = band_candidates(n, m, band)
    ranks = list(range(len(cands)))
    rng.shuffle(ranks)
    scores = {c: 100.0 * 2.0 ** (r - len(cands)) for c, r in zip(cands, ranks)}
    table = {(src[i], tgt[j]): s for (i, j), s in scores.items()}
    return src, tgt, ScriptedScorer(table), scores


def bt_fixture(n=100, rounds=5, seed=0):
    """Scripted per-round scores for n texts; returns texts, factory, scorer and expected picks."""
    from corpusforge.backends import ScriptedScorer, ScriptedTranslator

    rng = random.Random(seed)
    texts = [f"text {k}" for k in range(n)]
    table = {}
    expected = []
    for k, t in enumerate(texts):
        # few distinct values so ties across rounds are common
        row = [rng.choice((40.0, 60.0, 70.0, 75.0)) for _ in range(rounds)]
        if k == 0:
            row = [60.0, 75.0, 70.0, 75.0, 40.0][:rounds]
        for r, s in enumerate(row, 1):
            table[(f"{t} @r{r}", t)] = s
        best = max(row)
        expected.append(row.index(best) + 1)
    factory = lambda r: ScriptedTranslator(fn=lambda x, r=r: f"{x} @r{r}")  # noqa: E731
    return texts, factory, ScriptedScorer(table), expected
