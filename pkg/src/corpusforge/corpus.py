"""Pairs, passages, task records and their streaming on-disk formats."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from .lang_registry import LanguageTag, format_tag, parse_tag
from .text import collapse_ws, nfc

log = logging.getLogger(__name__)

Number = Union[int, float]


class Provenance(str, Enum):
    human = "human"
    mined = "mined"
    pivot = "pivot"
    backtranslated = "backtranslated"
    perturbed = "perturbed"


class RecordError(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid configuration, detected before any data is processed."""


@dataclass(frozen=True)
class SentencePair:
    id: str
    src_tag: LanguageTag
    tgt_tag: LanguageTag
    src_text: str
    tgt_text: str
    domain: str = "general"
    provenance: Provenance = Provenance.human
    score: Optional[float] = None
    meta: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.src_text.strip() or not self.tgt_text.strip():
            raise RecordError(f"pair {self.id}: empty side after trimming")
        if self.score is not None and not (1.0 <= self.score <= 100.0):
            raise RecordError(f"pair {self.id}: score {self.score} outside [1, 100]")

    def with_score(self, score: Optional[float]) -> "SentencePair":
        return replace(self, score=score)

    def to_json(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {
            "id": self.id,
            "src_tag": format_tag(self.src_tag),
            "tgt_tag": format_tag(self.tgt_tag),
            "src": self.src_text,
            "tgt": self.tgt_text,
            "domain": self.domain,
            "provenance": self.provenance.value,
        }
        if self.score is not None:
            d["score"] = self.score
        if self.meta:
            d["meta"] = list(self.meta)
        return d


@dataclass(frozen=True)
class Passage:
    id: str
    tag: LanguageTag
    sentences: Tuple[str, ...]
    domain: str = "general"

    def __post_init__(self):
        if not self.sentences:
            raise RecordError(f"passage {self.id}: no sentences")


@dataclass
class TaskRecord:
    task: str
    domain: str
    input: Dict[str, str]
    output: Dict[str, Union[str, Number]]

    def __post_init__(self):
        split_task(self.task)
        for k, v in self.output.items():
            if isinstance(v, bool):
                raise RecordError(f"output {k!r}: boolean values are not allowed")
            if isinstance(v, (int, float)) and not (1.0 <= v <= 100.0):
                raise RecordError(f"output {k!r}={v}: numeric outputs must lie in [1, 100]")

    def to_json(self) -> Dict[str, Any]:
        return {"task": self.task, "domain": self.domain, "input": dict(self.input), "output": dict(self.output)}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, obj: Dict[str, Any]) -> "TaskRecord":
        try:
            return cls(obj["task"], obj["domain"], dict(obj["input"]), dict(obj["output"]))
        except KeyError as e:
            raise RecordError(f"task record missing key {e}") from None


def task_string(name: str, src: str, tgt: str) -> str:
    return f"{name}${src}#{tgt}"


def split_task(task: str) -> Tuple[str, str, str]:
    """Split ``NAME$SRC#TGT``; exactly one ``$`` and one ``#`` are required."""
    if task.count("$") != 1 or task.count("#") != 1:
        raise RecordError(f"task {task!r}: expected exactly one '$' and one '#'")
    name, rest = task.split("$")
    if "#" in name:
        raise RecordError(f"task {task!r}: '#' before '$'")
    src, tgt = rest.split("#")
    if not name or not src or not tgt:
        raise RecordError(f"task {task!r}: empty segment")
    return name, src, tgt


@dataclass
class CorpusStats:
    total: int = 0
    kept: int = 0
    rejected: int = 0
    rejected_by_reason: Counter = field(default_factory=Counter)

    def keep(self) -> None:
        self.total += 1
        self.kept += 1

    def reject(self, reason: str) -> None:
        self.total += 1
        self.rejected += 1
        self.rejected_by_reason[reason] += 1

    def check(self) -> None:
        assert self.kept + self.rejected == self.total
        assert sum(self.rejected_by_reason.values()) == self.rejected

    def to_json(self) -> Dict[str, Any]:
        return {
            "total": self.total,
            "kept": self.kept,
            "rejected": self.rejected,
            "rejected_by_reason": dict(sorted(self.rejected_by_reason.items())),
        }


@dataclass(frozen=True)
class LineError:
    line: int
    offset: int
    message: str


class PairReader:
    """Lazily parse TSV or JSONL pairs from a binary stream.

    Bad lines do not stop the stream; they are counted in :attr:`error_count`
    and the first ``max_kept_errors`` are kept in :attr:`errors`.
    """

    def __init__(
        self,
        stream: IO[bytes],
        fmt: str = "tsv",
        src_tag: Optional[LanguageTag] = None,
        tgt_tag: Optional[LanguageTag] = None,
        domain: str = "general",
        provenance: Provenance = Provenance.human,
        max_kept_errors: int = 1000,
    ):
        if fmt not in ("tsv", "jsonl"):
            raise ValueError(f"unknown pair format {fmt!r}")
        if fmt == "tsv" and (src_tag is None or tgt_tag is None):
            raise ValueError("tsv input needs src_tag and tgt_tag")
        self.stream = stream
        self.fmt = fmt
        self.src_tag = src_tag
        self.tgt_tag = tgt_tag
        self.domain = domain
        self.provenance = provenance
        self.max_kept_errors = max_kept_errors
        self.errors: List[LineError] = []
        self.error_count = 0
        self.lines_read = 0

    def _error(self, lineno: int, offset: int, msg: str) -> None:
        self.error_count += 1
        if len(self.errors) < self.max_kept_errors:
            self.errors.append(LineError(lineno, offset, msg))
        log.debug("line %d (byte %d): %s", lineno, offset, msg)

    def __iter__(self) -> Iterator[SentencePair]:
        offset = 0
        for lineno, raw in enumerate(self.stream, 1):
            start = offset
            offset += len(raw)
            self.lines_read = lineno
            body = raw.rstrip(b"\n")
            if body.endswith(b"\r"):
                body = body[:-1]
            if not body.strip():
                continue
            try:
                line = body.decode("utf-8")
            except UnicodeDecodeError as e:
                self._error(lineno, start + e.start, f"invalid UTF-8: {e.reason}")
                continue
            try:
                if self.fmt == "tsv":
                    yield self._parse_tsv(lineno, nfc(line))
                else:
                    yield self._parse_jsonl(lineno, line)
            except (RecordError, ValueError, KeyError, TypeError) as e:
                self._error(lineno, start, str(e))

    def _parse_tsv(self, lineno: int, line: str) -> SentencePair:
        cols = line.split("\t")
        if len(cols) < 2:
            raise RecordError(f"expected at least 2 tab-separated columns, got {len(cols)}")
        score = None
        if len(cols) >= 3 and cols[2].strip():
            score = float(cols[2])
            if not math.isfinite(score):
                raise RecordError(f"non-finite score {cols[2]!r}")
        return SentencePair(
            str(lineno),
            self.src_tag,
            self.tgt_tag,
            cols[0],
            cols[1],
            self.domain,
            self.provenance,
            score,
            tuple(cols[3:]),
        )

    def _parse_jsonl(self, lineno: int, line: str) -> SentencePair:
        obj = json.loads(line)
        if not isinstance(obj, dict):
            raise RecordError("JSON line is not an object")
        src_tag = parse_tag(obj["src_tag"]) if "src_tag" in obj else self.src_tag
        tgt_tag = parse_tag(obj["tgt_tag"]) if "tgt_tag" in obj else self.tgt_tag
        if src_tag is None or tgt_tag is None:
            raise RecordError("language tags missing")
        score = obj.get("score")
        return SentencePair(
            str(obj.get("id", lineno)),
            src_tag,
            tgt_tag,
            nfc(obj["src"]),
            nfc(obj["tgt"]),
            obj.get("domain") or self.domain,
            Provenance(obj.get("provenance", self.provenance.value)),
            None if score is None else float(score),
            tuple(obj.get("meta", ())),
        )


def read_pairs(stream: IO[bytes], fmt: str = "tsv", **kw) -> PairReader:
    return PairReader(stream, fmt, **kw)


def write_pairs(pairs: Iterable[SentencePair], stream: IO[bytes], fmt: str = "tsv") -> int:
    n = 0
    for p in pairs:
        if fmt == "tsv":
            cols = [p.src_text, p.tgt_text]
            if p.score is not None or p.meta:
                cols.append("" if p.score is None else repr(p.score))
            cols.extend(p.meta)
            line = "\t".join(cols)
        else:
            line = json.dumps(p.to_json(), ensure_ascii=False, separators=(",", ":"))
        stream.write(line.encode("utf-8") + b"\n")
        n += 1
    return n


class WriteAborted(IOError):
    def __init__(self, written: int, cause: BaseException):
        super().__init__(f"write failed after {written} records: {cause}")
        self.written = written


def write_records(records: Iterable[TaskRecord], stream: IO[bytes]) -> int:
    """Write one compact JSON object per line; returns the number written."""
    n = 0
    for rec in records:
        data = rec.dumps().encode("utf-8") + b"\n"
        try:
            stream.write(data)
        except OSError as e:
            raise WriteAborted(n, e) from e
        n += 1
    return n


def read_records(stream: IO[bytes]) -> Iterator[TaskRecord]:
    for lineno, raw in enumerate(stream, 1):
        if not raw.strip():
            continue
        try:
            yield TaskRecord.from_json(json.loads(raw.decode("utf-8")))
        except (ValueError, UnicodeDecodeError) as e:
            raise RecordError(f"line {lineno}: {e}") from e


def dedupe_key(pair: SentencePair) -> Tuple[str, str]:
    return collapse_ws(nfc(pair.src_text)), collapse_ws(nfc(pair.tgt_text))


def dedupe(pairs: Iterable[SentencePair]) -> Iterator[SentencePair]:
    """Drop exact duplicates (after NFC and whitespace collapsing), keeping the first."""
    seen = set()
    for p in pairs:
        k = dedupe_key(p)
        if k in seen:
            continue
        seen.add(k)
        yield p
