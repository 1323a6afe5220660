"""Translator and scorer clients: HTTP, deterministic stubs and scripted fakes.

Wire protocol (JSON over HTTP POST)::

    translator  {"src": TAG, "tgt": TAG, "texts": [...]}        -> {"texts": [...]}
    scorer      {"src": TAG, "tgt": TAG, "pairs": [[s, t], ...]} -> {"scores": [...]}
"""

from __future__ import annotations

import logging
import time
from typing import Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

import httpx

from .lang_registry import LanguageTag, format_tag
from .metrics import chrf

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """A translator or scorer call failed (after retries, for HTTP clients)."""


class TranslatorClient(Protocol):
    def translate(self, texts: Sequence[str], src: LanguageTag, tgt: LanguageTag) -> List[str]:
        ...


class ScorerClient(Protocol):
    def score(self, pairs: Sequence[Tuple[str, str]], src: LanguageTag, tgt: LanguageTag) -> List[Optional[float]]:
        ...


class _HttpBackend:
    def __init__(self, url: str, timeout: float = 30.0, retries: int = 3, backoff: float = 0.5, client=None):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)

    def _post(self, payload: dict) -> dict:
        last: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._client.post(self.url, json=payload)
                resp.raise_for_status()
                return resp.json()
            except (httpx.HTTPError, ValueError) as e:
                last = e
                if attempt < self.retries:
                    delay = self.backoff * (2**attempt)
                    log.warning("backend %s failed (%s); retrying in %.2fs", self.url, e, delay)
                    time.sleep(delay)
        raise BackendError(f"{self.url}: {last}")


class HttpTranslator(_HttpBackend):
    def translate(self, texts, src, tgt):
        data = self._post({"src": format_tag(src), "tgt": format_tag(tgt), "texts": list(texts)})
        out = data.get("texts")
        if not isinstance(out, list) or len(out) != len(texts):
            raise BackendError(f"{self.url}: translator returned {len(out or [])} texts for {len(texts)}")
        return [str(t) for t in out]


class HttpScorer(_HttpBackend):
    def score(self, pairs, src, tgt):
        data = self._post({"src": format_tag(src), "tgt": format_tag(tgt), "pairs": [list(p) for p in pairs]})
        out = data.get("scores")
        if not isinstance(out, list) or len(out) != len(pairs):
            raise BackendError(f"{self.url}: scorer returned {len(out or [])} scores for {len(pairs)}")
        return [None if s is None else float(s) for s in out]


class StubTranslator:
    """Deterministic stand-in: prefixes the text with the target code."""

    def __init__(self, marker: str = ""):
        self.marker = marker

    def translate(self, texts, src, tgt):
        return [f"[{tgt.code}{self.marker}] {t}" for t in texts]


class StubScorer:
    """Deterministic stand-in scorer, clamped to [1, 100].

    The mean of chrF3 between the two sides and a character length-ratio
    score.  Identical texts score 100; unrelated texts of similar length in
    different scripts still get about 50, which keeps base qualities usable.
    """

    def score(self, pairs, src, tgt):
        return [stub_score(s, t) for s, t in pairs]


def stub_score(src: str, tgt: str) -> float:
    a, b = len("".join(src.split())), len("".join(tgt.split()))
    ratio = 100.0 * min(a, b) / max(a, b) if max(a, b) else 100.0
    return max(1.0, min(100.0, (chrf(tgt, src) + ratio) / 2.0))


class AttachedScores:
    """Scorer placeholder for corpora that already carry scores; never scores anything."""

    def score(self, pairs, src, tgt):
        return [None] * len(pairs)


class ScriptedTranslator:
    """Looks translations up in a mapping or computes them with a function."""

    def __init__(self, table: Optional[Mapping[str, str]] = None, fn: Optional[Callable[[str], str]] = None, fail: bool = False):
        self.table = dict(table or {})
        self.fn = fn
        self.fail = fail
        self.calls = 0

    def translate(self, texts, src, tgt):
        self.calls += 1
        if self.fail:
            raise BackendError("scripted translator failure")
        out = []
        for t in texts:
            if t in self.table:
                out.append(self.table[t])
            elif self.fn is not None:
                out.append(self.fn(t))
            else:
                raise BackendError(f"no scripted translation for {t!r}")
        return out


class ScriptedScorer:
    """Scores from a ``(src, tgt) -> score`` table, a function, or a default."""

    def __init__(
        self,
        table: Optional[Mapping[Tuple[str, str], float]] = None,
        fn: Optional[Callable[[str, str], float]] = None,
        default: Optional[float] = None,
    ):
        self.table: Dict[Tuple[str, str], float] = dict(table or {})
        self.fn = fn
        self.default = default
        self.calls = 0

    def score(self, pairs, src, tgt):
        self.calls += 1
        out = []
        for s, t in pairs:
            if (s, t) in self.table:
                out.append(self.table[(s, t)])
            elif self.fn is not None:
                out.append(self.fn(s, t))
            elif self.default is not None:
                out.append(self.default)
            else:
                raise BackendError(f"no scripted score for {(s, t)!r}")
        return out


def make_translator(spec: Optional[str]) -> TranslatorClient:
    if not spec or spec == "stub":
        return StubTranslator()
    if spec.startswith(("http://", "https://")):
        return HttpTranslator(spec)
    raise ValueError(f"unknown translator {spec!r} (use 'stub' or an http(s) URL)")


def make_scorer(spec: Optional[str]) -> ScorerClient:
    if not spec or spec == "stub":
        return StubScorer()
    if spec == "attached":
        return AttachedScores()
    if spec.startswith(("http://", "https://")):
        return HttpScorer(spec)
    raise ValueError(f"unknown scorer {spec!r} (use 'stub', 'attached' or an http(s) URL)")
