"""Four-stage cleaning stack for parallel corpora with per-pair verdicts."""

from __future__ import annotations

import itertools
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Protocol, Sequence, Tuple

from .corpus import ConfigError, CorpusStats, SentencePair
from .lang_registry import LanguageTag, Registry, get_registry, script_counts

LENGTH = "length"
LANGUAGE_SCRIPT = "language_script"
MARKUP = "markup"
QE_SCORE = "qe_score"
STAGES = (LENGTH, LANGUAGE_SCRIPT, MARKUP, QE_SCORE)

DEFAULT_CHUNK_SIZE = 10_000


@dataclass(frozen=True)
class FilterPolicy:
    max_word_delta: int = 10
    max_char_delta: Optional[int] = None
    majority_fraction: float = 0.5
    qe_margin: float = 10.0
    stages: FrozenSet[str] = frozenset(STAGES)

    def __post_init__(self):
        object.__setattr__(self, "stages", frozenset(self.stages))
        unknown = self.stages - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown stages {sorted(unknown)}")
        if self.max_word_delta < 0:
            raise ConfigError("max_word_delta must be >= 0")
        if self.max_char_delta is not None and self.max_char_delta < 0:
            raise ConfigError("max_char_delta must be >= 0")
        if self.qe_margin < 0:
            raise ConfigError("qe_margin must be >= 0")
        if not (0 < self.majority_fraction <= 1):
            raise ConfigError("majority_fraction must lie in (0, 1]")

    def to_json(self) -> dict:
        d = asdict(self)
        d["stages"] = [s for s in STAGES if s in self.stages]
        return d


@dataclass(frozen=True)
class FilterVerdict:
    id: str
    kept: bool
    reason: Optional[str] = None
    detail: str = ""

    def __post_init__(self):
        if self.kept == (self.reason is not None):
            raise ValueError("reason must be present iff the pair is rejected")

    def to_json(self) -> dict:
        d = {"id": self.id, "kept": self.kept}
        if self.reason is not None:
            d["reason"] = self.reason
        if self.detail:
            d["detail"] = self.detail
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, separators=(",", ":"))


def _keep(pair) -> FilterVerdict:
    return FilterVerdict(pair.id, True)


# ---------------------------------------------------------------- length


def char_delta_limit(pairs: Sequence[SentencePair], max_word_delta: int = 10) -> int:
    """``max_word_delta`` x mean word length of the side with fewer characters."""
    src_chars = sum(len(p.src_text) for p in pairs)
    tgt_chars = sum(len(p.tgt_text) for p in pairs)
    side = "src_text" if src_chars <= tgt_chars else "tgt_text"
    letters = words = 0
    for p in pairs:
        ws = getattr(p, side).split()
        words += len(ws)
        letters += len("".join(ws))
    mean = letters / words if words else 1.0
    return max(1, math.ceil(max_word_delta * mean))


def length_filter(pair: SentencePair, policy: FilterPolicy, char_limit: Optional[int] = None) -> FilterVerdict:
    sw, tw = len(pair.src_text.split()), len(pair.tgt_text.split())
    if abs(sw - tw) > policy.max_word_delta:
        return FilterVerdict(pair.id, False, LENGTH, f"word delta {abs(sw - tw)} > {policy.max_word_delta}")
    limit = policy.max_char_delta if policy.max_char_delta is not None else char_limit
    if limit is None:
        limit = char_delta_limit([pair], policy.max_word_delta)
    dc = abs(len(pair.src_text) - len(pair.tgt_text))
    if dc > limit:
        return FilterVerdict(pair.id, False, LENGTH, f"char delta {dc} > {limit}")
    return _keep(pair)


# ---------------------------------------------------------------- language / script


class WordLanguageClassifier(Protocol):
    def classify(self, word: str, candidates: Sequence[LanguageTag]) -> Optional[LanguageTag]:
        ...


class ScriptClassifier:
    """Word-level classifier using only the script of the word's letters.

    Returns the first candidate written in the word's dominant script, else
    any registry tag with that script, else None (unknown).
    """

    CACHE_LIMIT = 500_000

    def __init__(self, registry: Optional[Registry] = None):
        self.registry = registry or get_registry()
        # corpus vocabularies repeat heavily; remember each word's script
        self._cache: Dict[str, Optional[str]] = {}

    def script(self, word: str) -> Optional[str]:
        try:
            return self._cache[word]
        except KeyError:
            pass
        counts, _ = script_counts(word)
        script = min(counts, key=lambda s: (-counts[s], s)) if counts else None
        if len(self._cache) < self.CACHE_LIMIT:
            self._cache[word] = script
        return script

    def classify(self, word: str, candidates: Sequence[LanguageTag]) -> Optional[LanguageTag]:
        script = self.script(word)
        if script is None:
            return None
        for c in candidates:
            if c.script == script:
                return c
        return self.registry.first_with_script(script) or LanguageTag("WestGermanic", "und", script, False)


def _side_ok(text: str, tag: LanguageTag, candidates, classifier, fraction: float) -> Tuple[bool, float]:
    if type(classifier) is ScriptClassifier:
        # same decision as classify(): a word matches iff its script is the tag's
        script = classifier.script
        scripts = [script(w) for w in text.split()]
        known = len(scripts) - scripts.count(None)
        match = scripts.count(tag.script)
        if known == 0:
            return True, 1.0
        return match / known > fraction, match / known
    match = known = 0
    for w in text.split():
        try:
            got = classifier.classify(w, candidates)
        except Exception:
            got = None
        if got is None:
            continue
        known += 1
        if got == tag:
            match += 1
    if known == 0:
        return True, 1.0
    share = match / known
    return share > fraction, share


def _words_ok(words: List[str], tag: LanguageTag, classifier: "ScriptClassifier", fraction: float) -> bool:
    cache, script = classifier._cache, classifier.script
    scripts = [cache[w] if w in cache else script(w) for w in words]
    known = len(scripts) - scripts.count(None)
    return known == 0 or scripts.count(tag.script) / known > fraction


def language_script_filter(pair: SentencePair, classifier, policy: FilterPolicy) -> FilterVerdict:
    """Keep iff on both sides a strict majority of classified words match the declared tag."""
    for side, text, tag, other in (
        ("src", pair.src_text, pair.src_tag, pair.tgt_tag),
        ("tgt", pair.tgt_text, pair.tgt_tag, pair.src_tag),
    ):
        ok, share = _side_ok(text, tag, (tag, other), classifier, policy.majority_fraction)
        if not ok:
            return FilterVerdict(pair.id, False, LANGUAGE_SCRIPT, f"{side}: {share:.3f} of words match {tag.key}")
    return _keep(pair)


# ---------------------------------------------------------------- markup

_TAG_RE = re.compile(r"</?[A-Za-z][^<>]*>")
_NAME_RE = re.compile(r"</?([A-Za-z][A-Za-z0-9:_.-]*)")


def markup_signature(text: str) -> Counter:
    sig: Counter = Counter()
    if "<" not in text:
        return sig
    for m in _TAG_RE.finditer(text):
        tag = m.group()
        name = _NAME_RE.match(tag).group(1).lower()
        if tag.startswith("</"):
            kind = "close"
        elif tag.endswith("/>"):
            kind = "self"
        else:
            kind = "open"
        sig[(name, kind)] += 1
    return sig


def markup_filter(pair: SentencePair) -> FilterVerdict:
    a, b = markup_signature(pair.src_text), markup_signature(pair.tgt_text)
    if a != b:
        diff = (a - b) + (b - a)
        names = ", ".join(f"{k}:{n}" for (n, k) in sorted(diff))
        return FilterVerdict(pair.id, False, MARKUP, f"tag mismatch ({names})")
    return _keep(pair)


# ---------------------------------------------------------------- QE


def qe_threshold(scores: Iterable[float], margin: float) -> float:
    vals = list(scores)
    return math.fsum(vals) / len(vals) - margin


def qe_filter(batch: Sequence[SentencePair], policy: FilterPolicy) -> List[FilterVerdict]:
    """Keep pairs scoring at least mean - margin, grouped by language pair.

    Unscored pairs are left out of the mean and rejected as ``unscored``.
    """
    if not batch:
        raise ValueError("qe_filter needs a non-empty batch")
    groups: Dict[Tuple[LanguageTag, LanguageTag], List[float]] = {}
    for p in batch:
        if p.score is not None:
            groups.setdefault((p.src_tag, p.tgt_tag), []).append(p.score)
    thresholds = {k: qe_threshold(v, policy.qe_margin) for k, v in groups.items()}
    out = []
    for p in batch:
        if p.score is None:
            out.append(FilterVerdict(p.id, False, QE_SCORE, "unscored"))
            continue
        thr = thresholds[(p.src_tag, p.tgt_tag)]
        if p.score >= thr:
            out.append(_keep(p))
        else:
            out.append(FilterVerdict(p.id, False, QE_SCORE, f"score {p.score:g} < threshold {thr:.5f}"))
    return out


# ---------------------------------------------------------------- pipeline


class CleanPipeline:
    """Apply length -> language_script -> markup -> qe over a pair stream.

    Pairs are processed in chunks; the QE mean and the derived character
    limit are per chunk.  :meth:`run` yields ``(pair, verdict)`` in input
    order and keeps :attr:`stats` current.
    """

    def __init__(
        self,
        policy: FilterPolicy = FilterPolicy(),
        classifier: Optional[WordLanguageClassifier] = None,
        scorer=None,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
    ):
        if chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1")
        if QE_SCORE in policy.stages and scorer is None:
            raise ConfigError("the qe stage is enabled but no scorer is configured")
        self.policy = policy
        self.classifier = classifier or ScriptClassifier()
        self.scorer = scorer
        self.chunk_size = chunk_size
        self.stats = CorpusStats()
        self.thresholds: List[dict] = []

    def _chunk(self, chunk: List[SentencePair]) -> List[Tuple[SentencePair, FilterVerdict]]:
        pol = self.policy
        verdicts: List[Optional[FilterVerdict]] = [None] * len(chunk)
        limit = None
        if LENGTH in pol.stages and pol.max_char_delta is None:
            limit = char_delta_limit(chunk, pol.max_word_delta)
        do_len, do_lang, do_mark = LENGTH in pol.stages, LANGUAGE_SCRIPT in pol.stages, MARKUP in pol.stages
        if pol.max_char_delta is not None:
            limit = pol.max_char_delta
        fast = type(self.classifier) is ScriptClassifier
        max_dw, frac, clf = pol.max_word_delta, pol.majority_fraction, self.classifier
        for i, p in enumerate(chunk):
            v = None
            if fast:
                # split once and reuse for the length and script checks
                src, tgt = p.src_text, p.tgt_text
                sw, tw = src.split(), tgt.split()
                if do_len and (abs(len(sw) - len(tw)) > max_dw or abs(len(src) - len(tgt)) > limit):
                    v = length_filter(p, pol, limit)
                if v is None and do_lang:
                    if not (_words_ok(sw, p.src_tag, clf, frac) and _words_ok(tw, p.tgt_tag, clf, frac)):
                        v = language_script_filter(p, clf, pol)
                if v is None and do_mark and ("<" in src or "<" in tgt):
                    v = markup_filter(p)
                    if v.kept:
                        v = None
            else:
                if do_len:
                    v = length_filter(p, pol, limit)
                if (v is None or v.kept) and do_lang:
                    v = language_script_filter(p, self.classifier, pol)
                if (v is None or v.kept) and do_mark:
                    v = markup_filter(p)
                if v is not None and v.kept:
                    v = None
            verdicts[i] = v
        pairs = list(chunk)
        if QE_SCORE in pol.stages:
            survivors = [i for i, v in enumerate(verdicts) if v is None]
            if survivors:
                self._attach_scores(pairs, survivors)
                batch = [pairs[i] for i in survivors]
                for i, v in zip(survivors, qe_filter(batch, pol)):
                    verdicts[i] = v
                self._record_thresholds(batch)
        out = []
        for p, v in zip(pairs, verdicts):
            if v is None:
                v = _keep(p)
            if v.kept:
                self.stats.keep()
            else:
                self.stats.reject(v.reason)
            out.append((p, v))
        return out

    def _attach_scores(self, pairs: List[SentencePair], idx: List[int]) -> None:
        need = [i for i in idx if pairs[i].score is None]
        by_lang: Dict[Tuple[LanguageTag, LanguageTag], List[int]] = {}
        for i in need:
            by_lang.setdefault((pairs[i].src_tag, pairs[i].tgt_tag), []).append(i)
        for (s, t), members in by_lang.items():
            scores = self.scorer.score([(pairs[i].src_text, pairs[i].tgt_text) for i in members], s, t)
            if len(scores) != len(members):
                raise ConfigError("scorer returned a batch of the wrong length")
            for i, sc in zip(members, scores):
                if sc is not None:
                    pairs[i] = pairs[i].with_score(min(100.0, max(1.0, float(sc))))

    def _record_thresholds(self, batch: Sequence[SentencePair]) -> None:
        groups: Dict[Tuple[str, str], List[float]] = {}
        for p in batch:
            if p.score is not None:
                groups.setdefault((p.src_tag.key, p.tgt_tag.key), []).append(p.score)
        for (s, t), v in sorted(groups.items()):
            self.thresholds.append(
                {"src": s, "tgt": t, "mean": math.fsum(v) / len(v), "threshold": qe_threshold(v, self.policy.qe_margin), "n": len(v)}
            )

    def run(self, pairs: Iterable[SentencePair]) -> Iterator[Tuple[SentencePair, FilterVerdict]]:
        it = iter(pairs)
        while True:
            chunk = list(itertools.islice(it, self.chunk_size))
            if not chunk:
                return
            yield from self._chunk(chunk)


@dataclass
class CleanResult:
    kept: List[SentencePair]
    verdicts: List[FilterVerdict]
    stats: CorpusStats
    thresholds: List[dict] = field(default_factory=list)


def run_clean_pipeline(
    pairs: Iterable[SentencePair],
    policy: FilterPolicy = FilterPolicy(),
    classifier: Optional[WordLanguageClassifier] = None,
    scorer=None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> CleanResult:
    """In-memory convenience wrapper around :class:`CleanPipeline`."""
    pipe = CleanPipeline(policy, classifier, scorer, chunk_size)
    kept, verdicts = [], []
    for p, v in pipe.run(pairs):
        verdicts.append(v)
        if v.kept:
            kept.append(p)
    pipe.stats.check()
    return CleanResult(kept, verdicts, pipe.stats, pipe.thresholds)
