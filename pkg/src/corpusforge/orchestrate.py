"""Alignment, pivot translation and iterative / paragraph back-translation."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

from .backends import BackendError, ScorerClient, TranslatorClient
from .corpus import Passage, Provenance, SentencePair
from .lang_registry import LanguageTag

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_BAND = 5
DEFAULT_ROUNDS = 5
DEFAULT_BATCH = 64
DEFAULT_IN_FLIGHT = 4

TranslatorFactory = Callable[[int], TranslatorClient]


class Checkpoint:
    """Append-only JSONL of finished batch results, keyed by batch index."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.done: Dict[int, list] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for ln in fh:
                    if not ln.strip():
                        continue
                    try:
                        obj = json.loads(ln)
                    except ValueError:
                        # torn last line from an interrupted write
                        continue
                    self.done[int(obj["batch"])] = obj["out"]

    def record(self, index: int, out: list) -> None:
        self.done[index] = out
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"batch": index, "out": out}, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def run_batched(
    fn: Callable[[List[T]], List[R]],
    items: Sequence[T],
    batch_size: int = DEFAULT_BATCH,
    in_flight: int = DEFAULT_IN_FLIGHT,
    checkpoint: Optional[Checkpoint] = None,
) -> List[R]:
    """Call ``fn`` on consecutive batches, at most ``in_flight`` at once; results keep input order."""
    if batch_size < 1 or in_flight < 1:
        raise ValueError("batch_size and in_flight must be >= 1")
    batches = [list(items[i : i + batch_size]) for i in range(0, len(items), batch_size)]
    results: Dict[int, list] = {}
    todo = []
    for idx, b in enumerate(batches):
        if checkpoint is not None and idx in checkpoint.done:
            results[idx] = checkpoint.done[idx]
        else:
            todo.append(idx)

    def call(idx: int) -> list:
        out = fn(batches[idx])
        if len(out) != len(batches[idx]):
            raise BackendError(f"batch {idx}: got {len(out)} results for {len(batches[idx])} inputs")
        return list(out)

    if todo:
        with ThreadPoolExecutor(max_workers=min(in_flight, len(todo))) as pool:
            for idx, out in zip(todo, pool.map(call, todo)):
                results[idx] = out
                if checkpoint is not None:
                    checkpoint.record(idx, out)
    flat: List[R] = []
    for idx in range(len(batches)):
        flat.extend(results[idx])
    return flat


# ---------------------------------------------------------------- alignment


@dataclass(frozen=True)
class Alignment:
    src: int
    tgt: int
    score: float


def band_candidates(n: int, m: int, band: int = DEFAULT_BAND) -> List[Tuple[int, int]]:
    out = []
    for i in range(n):
        centre = round(i * m / n) if n else 0
        for j in range(max(0, centre - band), min(m, centre + band + 1)):
            out.append((i, j))
    return out


def greedy_monotone(scored: Iterable[Tuple[int, int, float]], threshold: float) -> List[Alignment]:
    """Best-score-first selection of a one-to-one, strictly monotone matching."""
    cands = sorted((c for c in scored if c[2] >= threshold), key=lambda c: (-c[2], c[0], c[1]))
    chosen: List[Tuple[int, int, float]] = []
    for i, j, s in cands:
        if all((a < i and b < j) or (a > i and b > j) for a, b, _ in chosen):
            chosen.append((i, j, s))
    chosen.sort()
    return [Alignment(i, j, s) for i, j, s in chosen]


def align_sentences(
    src_sentences: Sequence[str],
    tgt_sentences: Sequence[str],
    scorer: ScorerClient,
    threshold: float,
    src_tag: LanguageTag,
    tgt_tag: LanguageTag,
    band: int = DEFAULT_BAND,
) -> List[Alignment]:
    """Score candidate pairs inside a diagonal band and pick a monotone matching greedily."""
    if not src_sentences or not tgt_sentences:
        raise ValueError("both sentence lists must be non-empty")
    cands = band_candidates(len(src_sentences), len(tgt_sentences), band)
    scores = scorer.score([(src_sentences[i], tgt_sentences[j]) for i, j in cands], src_tag, tgt_tag)
    if len(scores) != len(cands):
        raise BackendError("scorer returned a batch of the wrong length")
    scored = [(i, j, float(s)) for (i, j), s in zip(cands, scores) if s is not None]
    return greedy_monotone(scored, threshold)


# ---------------------------------------------------------------- pivot


@dataclass
class PivotResult:
    pairs: List[SentencePair]
    thresholds: Dict[str, dict] = field(default_factory=dict)
    scored: List[Tuple[SentencePair, float]] = field(default_factory=list)


def pivot_translate(
    pairs: Sequence[SentencePair],
    pivot_tag: LanguageTag,
    target_tag: LanguageTag,
    translator: TranslatorClient,
    scorer: ScorerClient,
    batch_size: int = DEFAULT_BATCH,
    in_flight: int = DEFAULT_IN_FLIGHT,
    checkpoint: Optional[Checkpoint] = None,
) -> PivotResult:
    """Build X-target pairs by translating the pivot side of X-pivot pairs.

    Each generated pair is scored on (X text, generated text); per X language
    the pairs scoring below the batch mean are dropped.
    """
    if not pairs:
        return PivotResult([])
    oriented = []
    for p in pairs:
        if p.tgt_tag == pivot_tag:
            oriented.append((p.src_tag, p.src_text, p.tgt_text, p))
        elif p.src_tag == pivot_tag:
            oriented.append((p.tgt_tag, p.tgt_text, p.src_text, p))
        else:
            raise ValueError(f"pair {p.id} has no {pivot_tag.key} side")
    translated = run_batched(
        lambda batch: translator.translate(batch, pivot_tag, target_tag),
        [o[2] for o in oriented],
        batch_size,
        in_flight,
        checkpoint,
    )
    by_lang: Dict[LanguageTag, List[int]] = {}
    for k, o in enumerate(oriented):
        by_lang.setdefault(o[0], []).append(k)
    scores: List[float] = [0.0] * len(oriented)
    for x_tag, idx in by_lang.items():
        got = scorer.score([(oriented[k][1], translated[k]) for k in idx], x_tag, target_tag)
        if len(got) != len(idx):
            raise BackendError("scorer returned a batch of the wrong length")
        for k, s in zip(idx, got):
            if s is None:
                raise BackendError("scorer returned no score for a generated pair")
            scores[k] = float(s)
    result = PivotResult([])
    for x_tag, idx in by_lang.items():
        vals = [scores[k] for k in idx]
        mean = math.fsum(vals) / len(vals)
        result.thresholds[x_tag.key] = {"mean": mean, "threshold": mean, "batch_size": len(vals)}
    for k, (x_tag, x_text, _, src_pair) in enumerate(oriented):
        out = SentencePair(
            f"{src_pair.id}",
            x_tag,
            target_tag,
            x_text,
            translated[k],
            src_pair.domain,
            Provenance.pivot,
            max(1.0, min(100.0, scores[k])),
        )
        result.scored.append((out, scores[k]))
        if scores[k] >= result.thresholds[x_tag.key]["threshold"]:
            result.pairs.append(out)
    return result


# ---------------------------------------------------------------- back-translation


@dataclass
class BTState:
    """Per-text audit of every round's score and the best translation so far."""

    rounds: int
    iteration: int = 0
    best: List[Optional[Tuple[str, float, int]]] = field(default_factory=list)
    audit: List[List[Optional[float]]] = field(default_factory=list)
    failures: List[Tuple[int, str]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "rounds": self.rounds,
            "iteration": self.iteration,
            "best": [None if b is None else {"text": b[0], "score": b[1], "round": b[2]} for b in self.best],
            "audit": self.audit,
            "failures": [{"round": r, "error": e} for r, e in self.failures],
        }


def _as_factory(translator: Union[TranslatorClient, TranslatorFactory]) -> TranslatorFactory:
    if hasattr(translator, "translate"):
        return lambda _round: translator  # type: ignore[return-value]
    return translator  # type: ignore[return-value]


def back_translate_rounds(
    texts: Sequence[str],
    src_tag: LanguageTag,
    tgt_tag: LanguageTag,
    translator: Union[TranslatorClient, TranslatorFactory],
    scorer: ScorerClient,
    rounds: int = DEFAULT_ROUNDS,
    batch_size: int = DEFAULT_BATCH,
    in_flight: int = DEFAULT_IN_FLIGHT,
    checkpoint_dir: Optional[Union[str, Path]] = None,
) -> BTState:
    """Translate every text once per round and keep, per text, the best-scored round.

    Ties go to the earliest round.  A round whose translator or scorer fails
    is recorded in ``failures`` and skipped.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    factory = _as_factory(translator)
    state = BTState(rounds, best=[None] * len(texts), audit=[[] for _ in texts])
    for r in range(1, rounds + 1):
        try:
            client = factory(r)
            cp = Checkpoint(Path(checkpoint_dir) / f"round{r}.jsonl") if checkpoint_dir else None
            outs = run_batched(lambda b: client.translate(b, src_tag, tgt_tag), list(texts), batch_size, in_flight, cp)
            scores = scorer.score(list(zip(outs, texts)), tgt_tag, src_tag)
            if len(scores) != len(texts):
                raise BackendError("scorer returned a batch of the wrong length")
        except Exception as e:  # noqa: BLE001 - any backend failure skips the round
            log.warning("back-translation round %d failed: %s", r, e)
            state.failures.append((r, str(e)))
            for a in state.audit:
                a.append(None)
            continue
        state.iteration = r
        for k, (out, s) in enumerate(zip(outs, scores)):
            state.audit[k].append(None if s is None else float(s))
            if s is None:
                continue
            cur = state.best[k]
            if cur is None or float(s) > cur[1]:
                state.best[k] = (out, float(s), r)
    return state


def iterative_back_translate(
    texts: Sequence[str],
    src_tag: LanguageTag,
    tgt_tag: LanguageTag,
    translator: Union[TranslatorClient, TranslatorFactory],
    scorer: ScorerClient,
    rounds: int = DEFAULT_ROUNDS,
    domain: str = "general",
    **kw,
) -> Tuple[List[SentencePair], BTState]:
    """Back-translate monolingual ``src_tag`` texts into ``tgt_tag`` over several rounds.

    ``translator`` may be a client or a factory ``round -> client`` standing
    in for a system retrained between rounds.  Returned pairs carry the
    synthetic translation on the source side and the authentic text on the
    target side.
    """
    state = back_translate_rounds(texts, src_tag, tgt_tag, translator, scorer, rounds, **kw)
    pairs = []
    for k, (text, best) in enumerate(zip(texts, state.best)):
        if best is None:
            continue
        out, score, _ = best
        if not out.strip():
            continue
        pairs.append(
            SentencePair(str(k + 1), tgt_tag, src_tag, out, text, domain, Provenance.backtranslated, max(1.0, min(100.0, score)))
        )
    return pairs, state


def paragraph_back_translate(
    passages: Sequence[Passage],
    tgt_tag: LanguageTag,
    translator: Union[TranslatorClient, TranslatorFactory],
    scorer: ScorerClient,
    rounds: int = 1,
    **kw,
) -> Tuple[List[Passage], BTState]:
    """Translate passages sentence by sentence, keep the best variant, reassemble in order."""
    if not passages:
        raise ValueError("no passages given")
    src_tags = {p.tag for p in passages}
    if len(src_tags) != 1:
        raise ValueError("all passages must share one language tag")
    src_tag = src_tags.pop()
    flat = [s for p in passages for s in p.sentences]
    state = back_translate_rounds(flat, src_tag, tgt_tag, translator, scorer, rounds, **kw)
    out = []
    k = 0
    for p in passages:
        sents = []
        for _ in p.sentences:
            best = state.best[k]
            if best is None:
                raise BackendError(f"passage {p.id}: sentence {k} has no successful translation")
            sents.append(best[0])
            k += 1
        out.append(Passage(p.id, tgt_tag, tuple(sents), p.domain))
    return out, state
