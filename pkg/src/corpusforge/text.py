"""Shared tokenizer used by the perturbation engine, span markup and metrics.

Tokens are maximal runs of non-space, non-punctuation characters, and every
punctuation character (Unicode category P*) is a token of its own.  Each token
remembers whether it was glued to the previous token (no whitespace between),
which lets :func:`detokenize` rebuild a string that tokenizes back to exactly
the same token sequence.
"""

from __future__ import annotations

import functools
import re
import sys
import unicodedata
from typing import List, NamedTuple, Sequence


class Token(NamedTuple):
    text: str
    start: int
    end: int
    glued: bool


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def collapse_ws(text: str) -> str:
    return " ".join(text.split())


@functools.lru_cache(maxsize=None)
def _punct_class() -> str:
    ranges = []
    start = prev = None
    for cp in range(sys.maxunicode + 1):
        if unicodedata.category(chr(cp)).startswith("P"):
            if start is None:
                start = prev = cp
            elif cp == prev + 1:
                prev = cp
            else:
                ranges.append((start, prev))
                start = prev = cp
    ranges.append((start, prev))
    parts = []
    for lo, hi in ranges:
        if lo == hi:
            parts.append(re.escape(chr(lo)))
        else:
            parts.append(f"{re.escape(chr(lo))}-{re.escape(chr(hi))}")
    return "".join(parts)


@functools.lru_cache(maxsize=None)
def _token_re() -> re.Pattern:
    p = _punct_class()
    return re.compile(rf"[{p}]|[^\s{p}]+")


@functools.lru_cache(maxsize=None)
def _punct_re() -> re.Pattern:
    return re.compile(rf"[{_punct_class()}]")


def is_punct(token: str) -> bool:
    return len(token) == 1 and unicodedata.category(token).startswith("P")


def tokenize(text: str) -> List[Token]:
    """Split ``text`` into tokens with character offsets.

    No normalization is applied here; callers that ingest raw text are
    expected to NFC-normalize first.
    """
    out: List[Token] = []
    prev_end = -1
    for m in _token_re().finditer(text):
        out.append(Token(m.group(), m.start(), m.end(), m.start() == prev_end))
        prev_end = m.end()
    return out


def words(text: str) -> List[str]:
    return [t.text for t in tokenize(text)]


def is_single_token(s: str) -> bool:
    toks = tokenize(s)
    return len(toks) == 1 and toks[0].text == s


def detokenize(tokens: Sequence[str], glue: Sequence[bool]) -> str:
    """Join tokens, omitting the space only where a glued token touches punctuation.

    Two word tokens are always separated, otherwise they would merge into one
    token on re-tokenization.
    """
    parts: List[str] = []
    prev = None
    for tok, g in zip(tokens, glue):
        if prev is not None:
            if not (g and (is_punct(prev) or is_punct(tok))):
                parts.append(" ")
        parts.append(tok)
        prev = tok
    return "".join(parts)
