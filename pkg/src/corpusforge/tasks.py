"""Emitters for the seven task corpora in the multi-task JSON protocol."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from .corpus import ConfigError, SentencePair, TaskRecord, task_string
from .lang_registry import LanguageTag, format_tag
from .metrics import ter
from .perturb import (
    EditLog,
    InflectionTrie,
    Lexicon,
    LexiconSet,
    PerturbationError,
    PerturbationPlan,
    apply_perturbations,
)
from .text import nfc, tokenize

log = logging.getLogger(__name__)

TRANSLATION = "Translation"
CORRECTION = "Correction"
POST_EDITING = "Translation post editing"
DIRECT_ASSESSMENT = "Translation direct assessment"
QUALITY_ESTIMATION = "Translation quality estimation"
ERROR_MARKING = "Translation error marking"
ERROR_MARKING_CORRECTION = "Translation error marking and correction"

TASK_NAMES = (
    TRANSLATION,
    CORRECTION,
    POST_EDITING,
    DIRECT_ASSESSMENT,
    QUALITY_ESTIMATION,
    ERROR_MARKING,
    ERROR_MARKING_CORRECTION,
)

DA_KEY = "direct assessment score out of 100"
QE_KEY = "quality estimation score out of 100"

APE_RATE_BAND = (0.02, 0.15)
DA_RATE_BAND = (0.05, 0.5)

OPEN, CLOSE = "<e>", "</e>"
_ESCAPES = ((OPEN, "&lt;e&gt;"), (CLOSE, "&lt;/e&gt;"))


class RecordSkipped(Exception):
    """The perturbation produced no edit, so no training record can be built."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# ---------------------------------------------------------------- span markup


def escape_markup(text: str) -> str:
    for raw, esc in _ESCAPES:
        text = text.replace(raw, esc)
    return text


def unescape_markup(text: str) -> str:
    for raw, esc in _ESCAPES:
        text = text.replace(esc, raw)
    return text


def strip_tags(marked: str) -> str:
    return unescape_markup(marked.replace(OPEN, "").replace(CLOSE, ""))


def mark_spans(perturbed: str, log: EditLog) -> str:
    """Wrap each (merged) erroneous token span of ``perturbed`` in ``<e>...</e>``."""
    toks = tokenize(perturbed)
    spans = log.error_spans()
    if log.output_token_count and log.output_token_count != len(toks):
        raise PerturbationError(
            f"corrupt log: expects {log.output_token_count} output tokens, text has {len(toks)}"
        )
    for s, e in spans:
        if e > len(toks):
            raise PerturbationError(f"corrupt log: span [{s},{e}) beyond {len(toks)} tokens")
    out = []
    pos = 0
    for s, e in spans:
        a, b = toks[s].start, toks[e - 1].end
        out.append(escape_markup(perturbed[pos:a]))
        out.append(OPEN + escape_markup(perturbed[a:b]) + CLOSE)
        pos = b
    out.append(escape_markup(perturbed[pos:]))
    return "".join(out)


def parse_spans(marked: str) -> Tuple[str, List[Tuple[int, int]]]:
    """Recover the plain text and its marked token spans from ``<e>`` markup."""
    plain: List[str] = []
    char_spans = []
    length = 0
    i = 0
    open_at: Optional[int] = None
    while i < len(marked):
        if marked.startswith(OPEN, i):
            if open_at is not None:
                raise ValueError("nested <e> tag")
            open_at = length
            i += len(OPEN)
        elif marked.startswith(CLOSE, i):
            if open_at is None:
                raise ValueError("unbalanced </e> tag")
            char_spans.append((open_at, length))
            open_at = None
            i += len(CLOSE)
        else:
            nxt = [p for p in (marked.find(OPEN, i), marked.find(CLOSE, i)) if p != -1]
            j = min(nxt) if nxt else len(marked)
            chunk = unescape_markup(marked[i:j])
            plain.append(chunk)
            length += len(chunk)
            i = j
    if open_at is not None:
        raise ValueError("unclosed <e> tag")
    text = "".join(plain)
    toks = tokenize(text)
    spans = []
    for a, b in char_spans:
        idx = [k for k, t in enumerate(toks) if t.start >= a and t.end <= b]
        if idx:
            spans.append((idx[0], idx[-1] + 1))
    return text, spans


# ---------------------------------------------------------------- records


def _domain(pair) -> str:
    return pair.domain or "general"


def make_translation_record(pair: SentencePair) -> TaskRecord:
    s, t = format_tag(pair.src_tag), format_tag(pair.tgt_tag)
    return TaskRecord(task_string(TRANSLATION, s, t), _domain(pair), {s: pair.src_text}, {t: pair.tgt_text})


def _check_band(plan: PerturbationPlan, band: Tuple[float, float], what: str) -> None:
    lo, hi = band
    if not (lo <= plan.rate <= hi):
        raise ConfigError(f"{what} rate {plan.rate} outside [{lo}, {hi}]")


def _perturb(text, plan, lexicons, trie) -> Tuple[str, EditLog]:
    out, elog = apply_perturbations(text, plan, lexicons, trie)
    if not elog.edits:
        raise RecordSkipped("no eligible position for the requested perturbations")
    return out, elog


def make_grammar_record(
    text: str,
    tag: LanguageTag,
    plan: PerturbationPlan,
    lexicons: Union[LexiconSet, Lexicon, None] = None,
    trie: Optional[InflectionTrie] = None,
    domain: str = "general",
) -> TaskRecord:
    original = nfc(text)
    perturbed, _ = _perturb(original, plan, lexicons, trie)
    t = format_tag(tag)
    return TaskRecord(
        task_string(CORRECTION, f"Incorrect {t}", t),
        domain or "general",
        {f"Incorrect {t}": perturbed},
        {f"Corrected {t}": original},
    )


@dataclass(frozen=True)
class Synthesized:
    record: TaskRecord
    perturbed: str
    log: EditLog


def synth_ape(pair, plan, lexicons=None, trie=None) -> Synthesized:
    _check_band(plan, APE_RATE_BAND, "APE")
    perturbed, elog = _perturb(pair.tgt_text, plan, lexicons, trie)
    s, t = format_tag(pair.src_tag), format_tag(pair.tgt_tag)
    rec = TaskRecord(
        task_string(POST_EDITING, s, t),
        _domain(pair),
        {s: pair.src_text, t: perturbed},
        {f"post edited {t}": pair.tgt_text},
    )
    return Synthesized(rec, perturbed, elog)


def make_ape_record(pair, plan, lexicons=None, trie=None) -> TaskRecord:
    return synth_ape(pair, plan, lexicons, trie).record


def synth_error_mark(pair, plan, lexicons=None, trie=None, correct: bool = False) -> Synthesized:
    _check_band(plan, APE_RATE_BAND, "error-marking")
    perturbed, elog = _perturb(pair.tgt_text, plan, lexicons, trie)
    s, t = format_tag(pair.src_tag), format_tag(pair.tgt_tag)
    output = {f"error marked {t}": mark_spans(perturbed, elog)}
    if correct:
        output[f"post edited {t}"] = pair.tgt_text
    name = ERROR_MARKING_CORRECTION if correct else ERROR_MARKING
    rec = TaskRecord(task_string(name, s, t), _domain(pair), {s: pair.src_text, t: perturbed}, output)
    return Synthesized(rec, perturbed, elog)


def make_error_mark_record(pair, plan, lexicons=None, trie=None) -> TaskRecord:
    return synth_error_mark(pair, plan, lexicons, trie).record


def make_error_mark_and_correct_record(pair, plan, lexicons=None, trie=None) -> TaskRecord:
    return synth_error_mark(pair, plan, lexicons, trie, correct=True).record


# ---------------------------------------------------------------- DA / QE


@dataclass(frozen=True)
class DAScoreInputs:
    source: str
    translation: str
    perturbed: str
    error_pct: float
    base_quality: float
    ter_pct: float

    def __post_init__(self):
        if not (0.0 <= self.error_pct <= 100.0):
            raise ValueError(f"error percentage {self.error_pct} outside [0, 100]")
        if not (0.0 <= self.base_quality <= 100.0):
            raise ValueError(f"base quality {self.base_quality} outside [0, 100]")
        if self.ter_pct < 0:
            raise ValueError("TER must be non-negative")

    @property
    def ter_clamped(self) -> float:
        return min(self.ter_pct, 100.0)

    @property
    def ter_score(self) -> float:
        """100 - TER, clamped to [0, 100]."""
        return 100.0 - self.ter_clamped


def _clamp(x: float, lo: float = 1.0, hi: float = 100.0) -> float:
    return max(lo, min(hi, x))


def synth_da_score(inputs: DAScoreInputs, literal: bool = False) -> float:
    """Base quality minus a degradation factor, clamped to [1, 100].

    The default degradation is ``(Ep + TER) / 2``, which grows with error
    severity.  ``literal=True`` averages ``Ep`` with ``100 - TER`` instead.
    """
    second = inputs.ter_score if literal else inputs.ter_clamped
    degradation = (inputs.error_pct + second) / 2.0
    return _clamp(inputs.base_quality - degradation)


def error_percentage(elog: EditLog) -> float:
    return 100.0 * elog.edited_positions / elog.token_count


def da_inputs(source: str, translation: str, perturbed: str, elog: EditLog, base_quality: float) -> DAScoreInputs:
    return DAScoreInputs(
        source,
        translation,
        perturbed,
        error_percentage(elog),
        base_quality,
        ter(perturbed, translation),
    )


def _score_value(score: float) -> float:
    if not (1.0 <= score <= 100.0):
        raise ValueError(f"score {score} outside [1, 100]")
    return round(float(score), 5)


def make_da_record(pair: SentencePair, gold: str, system: str, score: float) -> TaskRecord:
    s, t = format_tag(pair.src_tag), format_tag(pair.tgt_tag)
    return TaskRecord(
        task_string(DIRECT_ASSESSMENT, s, t),
        _domain(pair),
        {s: pair.src_text, f"gold {t}": gold, f"system {t}": system},
        {DA_KEY: _score_value(score)},
    )


def make_qe_record(pair: SentencePair, system: str, score: float) -> TaskRecord:
    s, t = format_tag(pair.src_tag), format_tag(pair.tgt_tag)
    return TaskRecord(
        task_string(QUALITY_ESTIMATION, s, t),
        _domain(pair),
        {s: pair.src_text, t: system},
        {QE_KEY: _score_value(score)},
    )


@dataclass(frozen=True)
class SynthesizedDA:
    da: TaskRecord
    qe: TaskRecord
    inputs: DAScoreInputs
    score: float
    log: EditLog


def synth_da(
    pair: SentencePair,
    plan: PerturbationPlan,
    base_quality: float,
    lexicons=None,
    trie=None,
    literal: bool = False,
) -> SynthesizedDA:
    """Perturb the target, score it against the original, emit DA and QE records."""
    _check_band(plan, DA_RATE_BAND, "DA")
    perturbed, elog = _perturb(pair.tgt_text, plan, lexicons, trie)
    inputs = da_inputs(pair.src_text, pair.tgt_text, perturbed, elog, base_quality)
    score = synth_da_score(inputs, literal=literal)
    return SynthesizedDA(
        make_da_record(pair, pair.tgt_text, perturbed, score),
        make_qe_record(pair, perturbed, score),
        inputs,
        score,
        elog,
    )
