"""Run configuration, manifests and the batch runners behind each CLI subcommand."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Callable, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

from . import __version__
from .backends import make_scorer, make_translator
from .cleaning import STAGES, CleanPipeline, FilterPolicy, ScriptClassifier
from .corpus import ConfigError, CorpusStats, LineError, Passage, PairReader, SentencePair, write_pairs
from .lang_registry import (
    IndeterminateScript,
    LanguageTag,
    Registry,
    TagParseError,
    dominant_script,
    format_tag,
    get_registry,
    parse_tag,
    set_registry,
)
from .metrics import UndefinedCorrelation, bleu, bleu_stats, bleu_from_stats, chrf, corpus_chrf, corpus_ter, span_f1, spearman, ter
from .orchestrate import (
    DEFAULT_BAND,
    DEFAULT_BATCH,
    DEFAULT_IN_FLIGHT,
    DEFAULT_ROUNDS,
    Checkpoint,
    align_sentences,
    iterative_back_translate,
    paragraph_back_translate,
    pivot_translate,
    run_batched,
)
from .perturb import (
    ALL_KINDS,
    DEFAULT_RATE,
    InflectionTrie,
    LexiconSet,
    MissingResource,
    PerturbationError,
    PerturbationKind,
    PerturbationPlan,
    apply_perturbations,
    build_inflection_trie,
    check_resources,
    derive_seed,
    load_vocabulary,
)
from .tasks import (
    APE_RATE_BAND,
    DA_RATE_BAND,
    RecordSkipped,
    make_ape_record,
    make_error_mark_and_correct_record,
    make_error_mark_record,
    make_grammar_record,
    make_translation_record,
    synth_da,
)
from .text import nfc, tokenize

log = logging.getLogger(__name__)

TRANSLATOR_ENV = "CORPUSFORGE_TRANSLATOR_URL"
SCORER_ENV = "CORPUSFORGE_SCORER_URL"

SYNTH_TASKS = ("gec", "ape", "errmark", "errmark-correct", "da", "qe", "translation")
FORMATS = ("tsv", "jsonl", "text")

# legal rate range and default per synth task
_TASK_RATES = {
    "gec": ((0.0005, 0.5), DEFAULT_RATE),
    "ape": (APE_RATE_BAND, 0.05),
    "errmark": (APE_RATE_BAND, 0.05),
    "errmark-correct": (APE_RATE_BAND, 0.05),
    "da": (DA_RATE_BAND, 0.1),
    "qe": (DA_RATE_BAND, 0.1),
    "translation": (None, None),
}


class DataError(RuntimeError):
    """Input unreadable, or malformed lines beyond the error budget (exit 1)."""


# ---------------------------------------------------------------- config


def _csv(value: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _opt_int(value: str) -> Optional[int]:
    return None if value.strip().lower() in ("", "none", "auto") else int(value)


def _opt_float(value: str) -> Optional[float]:
    return None if value.strip().lower() in ("", "none", "auto") else float(value)


def _opt_str(value: str) -> Optional[str]:
    return value.strip() or None


@dataclass
class RunConfig:
    """Everything a run depends on.  Snapshotted verbatim into the manifest."""

    command: str = "stats"
    seed: int = 0
    jobs: int = 1
    chunk_size: int = 10_000
    error_budget: float = 0.001
    input: Optional[str] = None
    output: Optional[str] = None
    verdicts: Optional[str] = None
    format: str = "tsv"
    out_format: Optional[str] = None
    src_tag: Optional[str] = None
    tgt_tag: Optional[str] = None
    domain: str = "general"
    lexicons: Optional[str] = None
    registry: Optional[str] = None
    # clean
    stages: Tuple[str, ...] = ("length", "language_script", "markup")
    max_word_delta: int = 10
    max_char_delta: Optional[int] = None
    majority_fraction: float = 0.5
    qe_margin: float = 10.0
    # perturb / synth
    kinds: Tuple[str, ...] = ()
    rate: Optional[float] = None
    task: Optional[str] = None
    literal_da: bool = False
    # backends
    translator: Optional[str] = None
    scorer: Optional[str] = None
    # align
    band: int = DEFAULT_BAND
    threshold: float = 0.0
    tgt_input: Optional[str] = None
    # pivot
    pivot_tag: Optional[str] = None
    target_tag: Optional[str] = None
    # backtranslate / batching
    rounds: int = DEFAULT_ROUNDS
    batch_size: int = DEFAULT_BATCH
    in_flight: int = DEFAULT_IN_FLIGHT
    checkpoint: Optional[str] = None
    paragraphs: bool = False
    # score
    hyp: Optional[str] = None
    ref: Optional[str] = None

    def snapshot(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def tag(self, name: str) -> Optional[LanguageTag]:
        value = getattr(self, name)
        return None if value is None else parse_tag(value)

    def policy(self) -> FilterPolicy:
        return FilterPolicy(
            max_word_delta=self.max_word_delta,
            max_char_delta=self.max_char_delta,
            majority_fraction=self.majority_fraction,
            qe_margin=self.qe_margin,
            stages=frozenset(self.stages),
        )

    def perturb_kinds(self) -> Tuple[PerturbationKind, ...]:
        return tuple(PerturbationKind(k) for k in self.kinds)

    def task_rate(self) -> Optional[float]:
        band, default = _TASK_RATES.get(self.task or "gec", (None, DEFAULT_RATE))
        return self.rate if self.rate is not None else default

    def validate(self) -> None:
        """Raise ConfigError on anything wrong; never touches input files."""
        try:
            if self.registry:
                set_registry(Registry.load(self.registry))
            for name in ("src_tag", "tgt_tag", "pivot_tag", "target_tag"):
                self.tag(name)
        except TagParseError as e:
            raise ConfigError(f"bad language tag: {e}") from None
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot load registry: {e}") from None
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if self.chunk_size < 1:
            raise ConfigError("--chunk-size must be >= 1")
        if not (0.0 <= self.error_budget <= 1.0):
            raise ConfigError("--error-budget must lie in [0, 1]")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}")
        if self.out_format is not None and self.out_format not in ("tsv", "jsonl"):
            raise ConfigError(f"unknown output format {self.out_format!r}")
        if self.format == "tsv" and self.command in ("clean", "pivot", "stats") and not (self.src_tag and self.tgt_tag):
            raise ConfigError("tsv input needs --src-tag and --tgt-tag")
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ConfigError(f"unknown cleaning stages {sorted(unknown)}")
        self.policy()
        if self.command == "clean" and "qe_score" in self.stages and not self.scorer:
            raise ConfigError("the qe_score stage is enabled but no scorer is configured")
        try:
            self.perturb_kinds()
        except ValueError:
            raise ConfigError(f"unknown perturbation kinds in {list(self.kinds)}; choose from {[k.value for k in ALL_KINDS]}") from None
        if self.command == "synth":
            if self.task not in SYNTH_TASKS:
                raise ConfigError(f"synth needs --task in {SYNTH_TASKS}")
            band, _ = _TASK_RATES[self.task]
            rate = self.task_rate()
            if band is not None and not (band[0] <= rate <= band[1]):
                raise ConfigError(f"{self.task} rate {rate} outside [{band[0]}, {band[1]}]")
            if self.task != "gec" and self.format == "text":
                raise ConfigError(f"synth {self.task} needs parallel input (tsv or jsonl)")
        if self.command in ("perturb",) and self.rate is not None:
            try:
                PerturbationPlan((ALL_KINDS[0],), self.rate)
            except PerturbationError as e:
                raise ConfigError(str(e)) from None
        if self.command in ("align", "backtranslate") and not self.src_tag:
            raise ConfigError(f"{self.command} needs --src-tag")
        if self.command in ("align", "backtranslate") and not self.tgt_tag:
            raise ConfigError(f"{self.command} needs --tgt-tag")
        if self.command == "align" and not self.tgt_input:
            raise ConfigError("align needs a target sentence file")
        if self.command == "pivot" and not (self.pivot_tag and self.target_tag):
            raise ConfigError("pivot needs --pivot-tag and --target-tag")
        if self.command == "score" and not (self.input or (self.hyp and self.ref)):
            raise ConfigError("score needs a JSONL input or --hyp and --ref")
        if self.rounds < 1:
            raise ConfigError("--rounds must be >= 1")
        if self.band < 0:
            raise ConfigError("--band must be >= 0")
        if self.batch_size < 1 or self.in_flight < 1:
            raise ConfigError("--batch-size and --in-flight must be >= 1")
        for spec in (self.translator, self.scorer):
            if spec and spec not in ("stub", "attached") and not spec.startswith(("http://", "https://")):
                raise ConfigError(f"unknown backend {spec!r}")
        if self.translator == "attached":
            raise ConfigError("'attached' is a scorer mode only")


_CONVERTERS: Dict[str, Callable[[str], Any]] = {
    "seed": int,
    "jobs": int,
    "chunk_size": int,
    "error_budget": float,
    "stages": _csv,
    "max_word_delta": int,
    "max_char_delta": _opt_int,
    "majority_fraction": float,
    "qe_margin": float,
    "kinds": _csv,
    "rate": _opt_float,
    "literal_da": _bool,
    "band": int,
    "threshold": float,
    "rounds": int,
    "batch_size": int,
    "in_flight": int,
    "paragraphs": _bool,
}

# section -> keys accepted there; key names match RunConfig fields
CONFIG_SECTIONS: Dict[str, Tuple[str, ...]] = {
    "run": ("seed", "jobs", "chunk_size", "error_budget", "input", "output", "verdicts", "format", "out_format",
            "src_tag", "tgt_tag", "domain", "lexicons", "registry"),
    "clean": ("stages", "max_word_delta", "max_char_delta", "majority_fraction", "qe_margin"),
    "perturb": ("kinds", "rate"),
    "synth": ("task", "rate", "literal_da"),
    "backends": ("translator", "scorer"),
    "align": ("band", "threshold", "tgt_input"),
    "pivot": ("pivot_tag", "target_tag"),
    "backtranslate": ("rounds", "batch_size", "in_flight", "checkpoint", "paragraphs"),
    "score": ("hyp", "ref"),
}


def load_config_file(path: str) -> Dict[str, Any]:
    """Parse an INI-style config file into RunConfig field values."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    values: Dict[str, Any] = {}
    for section in cp.sections():
        if section not in CONFIG_SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in cp.items(section):
            key = key.replace("-", "_")
            if key not in CONFIG_SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            conv = _CONVERTERS.get(key, _opt_str)
            try:
                values[key] = conv(raw)
            except ValueError as e:
                raise ConfigError(f"{path}: [{section}] {key}: {e}") from None
    return values


def build_config(command: str, file_values: Dict[str, Any], overrides: Dict[str, Any], env=None) -> RunConfig:
    """Defaults < config file < environment < command-line flags."""
    env = os.environ if env is None else env
    values: Dict[str, Any] = dict(file_values)
    if env.get(TRANSLATOR_ENV):
        values["translator"] = env[TRANSLATOR_ENV]
    if env.get(SCORER_ENV):
        values["scorer"] = env[SCORER_ENV]
    values.update({k: v for k, v in overrides.items() if v is not None})
    values["command"] = command
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown settings {sorted(unknown)}")
    return RunConfig(**values)


# ---------------------------------------------------------------- I/O helpers


class HashingReader:
    """Iterate lines of a binary stream while hashing every byte read."""

    def __init__(self, stream: IO[bytes]):
        self.stream = stream
        self.sha = hashlib.sha256()
        self.size = 0

    def __iter__(self) -> Iterator[bytes]:
        for line in self.stream:
            self.sha.update(line)
            self.size += len(line)
            yield line

    def hexdigest(self) -> str:
        return self.sha.hexdigest()


class HashingWriter:
    def __init__(self, stream: IO[bytes]):
        self.stream = stream
        self.sha = hashlib.sha256()
        self.size = 0

    def write(self, data: bytes) -> int:
        self.sha.update(data)
        self.size += len(data)
        return self.stream.write(data)

    def write_line(self, text: str) -> None:
        self.write(text.encode("utf-8") + b"\n")

    def hexdigest(self) -> str:
        return self.sha.hexdigest()


def _open_in(path: Optional[str]) -> IO[bytes]:
    if path is None or path == "-":
        return sys.stdin.buffer
    try:
        return open(path, "rb")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None


class _Output:
    """Write to ``path`` via a temp file renamed on success (stdout when None or '-')."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self._tmp: Optional[Path] = None
        self._fh: Optional[IO[bytes]] = None

    def __enter__(self) -> HashingWriter:
        if self.path is None or self.path == "-":
            self.writer = HashingWriter(sys.stdout.buffer)
        else:
            target = Path(self.path)
            if target.parent and not target.parent.exists():
                target.parent.mkdir(parents=True, exist_ok=True)
            self._tmp = target.with_name(target.name + ".part")
            self._fh = open(self._tmp, "wb")
            self.writer = HashingWriter(self._fh)
        return self.writer

    def __exit__(self, exc_type, exc, tb):
        if self._fh is not None:
            self._fh.close()
            if exc_type is None:
                os.replace(self._tmp, self.path)
            else:
                self._tmp.unlink(missing_ok=True)
        else:
            sys.stdout.buffer.flush()
        return False


class Mono(NamedTuple):
    id: str
    tag: LanguageTag
    text: str
    domain: str = "general"


class TextReader:
    """One sentence per line; same error bookkeeping as :class:`PairReader`."""

    def __init__(self, stream, tag: LanguageTag, domain: str = "general", max_kept_errors: int = 1000):
        self.stream = stream
        self.tag = tag
        self.domain = domain
        self.max_kept_errors = max_kept_errors
        self.errors: List[LineError] = []
        self.error_count = 0
        self.lines_read = 0

    def __iter__(self) -> Iterator[Mono]:
        offset = 0
        for lineno, raw in enumerate(self.stream, 1):
            start = offset
            offset += len(raw)
            self.lines_read = lineno
            body = raw.rstrip(b"\r\n")
            try:
                line = nfc(body.decode("utf-8")).strip()
            except UnicodeDecodeError as e:
                self.error_count += 1
                if len(self.errors) < self.max_kept_errors:
                    self.errors.append(LineError(lineno, start + e.start, f"invalid UTF-8: {e.reason}"))
                continue
            if line:
                yield Mono(str(lineno), self.tag, line, self.domain)


def _reader(cfg: RunConfig, stream, tag_name: str = "src_tag"):
    if cfg.format == "text":
        tag = cfg.tag(tag_name)
        if tag is None:
            raise ConfigError("text input needs a language tag")
        return TextReader(stream, tag, cfg.domain)
    return PairReader(stream, cfg.format, src_tag=cfg.tag("src_tag"), tgt_tag=cfg.tag("tgt_tag"), domain=cfg.domain)


def _chunks(items: Iterable, size: int) -> Iterator[list]:
    buf = []
    for x in items:
        buf.append(x)
        if len(buf) >= size:
            yield buf
            buf = []
    if buf:
        yield buf


# ---------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    version: str = __version__
    inputs: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    outputs: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    stats: Dict[str, Any] = field(default_factory=dict)
    errors: Dict[str, Any] = field(default_factory=lambda: {"malformed_lines": 0, "first": []})
    thresholds: Any = None
    timings: Dict[str, float] = field(default_factory=dict)
    status: str = "ok"
    exit_code: int = 0

    def to_json(self) -> Dict[str, Any]:
        d = {
            "tool": "corpusforge",
            "version": self.version,
            "command": self.command,
            "status": self.status,
            "exit_code": self.exit_code,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "stats": self.stats,
            "errors": self.errors,
            "timings": self.timings,
        }
        if self.thresholds is not None:
            d["thresholds"] = self.thresholds
        return d

    def write(self, path: str) -> None:
        text = json.dumps(self.to_json(), ensure_ascii=False, indent=2, sort_keys=False) + "\n"
        if path == "-":
            sys.stderr.write(text)
            return
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")

    def note_input(self, name: str, path: Optional[str], reader: HashingReader, parsed=None) -> None:
        info: Dict[str, Any] = {"path": path or "-", "sha256": reader.hexdigest(), "bytes": reader.size}
        if parsed is not None:
            info["lines"] = parsed.lines_read
            info["malformed"] = parsed.error_count
            self.errors["malformed_lines"] += parsed.error_count
            room = 20 - len(self.errors["first"])
            for e in parsed.errors[: max(0, room)]:
                self.errors["first"].append({"input": name, "line": e.line, "offset": e.offset, "message": e.message})
        self.inputs[name] = info

    def note_output(self, name: str, path: Optional[str], writer: HashingWriter, records: int) -> None:
        self.outputs[name] = {"path": path or "-", "sha256": writer.hexdigest(), "bytes": writer.size, "records": records}

    def check_budget(self, budget: float) -> None:
        lines = sum(i.get("lines", 0) for i in self.inputs.values())
        bad = self.errors["malformed_lines"]
        if lines and bad / lines > budget:
            self.status = "error_budget_exceeded"
            self.exit_code = 1
            self.errors["budget"] = budget
            self.errors["rate"] = bad / lines


class _Timer:
    def __init__(self, manifest: RunManifest, name: str):
        self.m, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.m.timings[self.name] = round(time.perf_counter() - self.t0, 6)
        return False


# ---------------------------------------------------------------- resources


def _lexicon_root(cfg_root: Optional[str]) -> Path:
    if cfg_root:
        return Path(cfg_root)
    from importlib import resources

    return Path(str(resources.files("corpusforge").joinpath("data/lexicons")))


class Resources:
    """Lexicons and inflection tries, loaded once per process."""

    def __init__(self, root: Optional[str] = None):
        self.root = _lexicon_root(root)
        self.lexicons = LexiconSet.load(self.root) if self.root.is_dir() else LexiconSet()
        self._tries: Dict[str, Optional[InflectionTrie]] = {}
        self._kinds: Dict[str, Tuple[PerturbationKind, ...]] = {}

    def trie(self, tag: LanguageTag) -> Optional[InflectionTrie]:
        if tag.key not in self._tries:
            vocab = self.root / tag.key / "vocab.txt"
            self._tries[tag.key] = build_inflection_trie(load_vocabulary(vocab)) if vocab.is_file() else None
        return self._tries[tag.key]

    def available_kinds(self, tag: LanguageTag) -> Tuple[PerturbationKind, ...]:
        """Kinds whose resources exist for ``tag``, in canonical order."""
        if tag.key not in self._kinds:
            lex, trie = self.lexicons.get(tag), self.trie(tag)
            ok = []
            for k in ALL_KINDS:
                try:
                    check_resources(PerturbationPlan((k,)), lex, trie)
                except MissingResource:
                    continue
                ok.append(k)
            self._kinds[tag.key] = tuple(ok)
        return self._kinds[tag.key]


# ---------------------------------------------------------------- perturb / synth workers


@dataclass(frozen=True)
class SynthSpec:
    """Picklable description of a perturb/synth job, rebuilt inside each worker."""

    task: str  # "perturb" or one of SYNTH_TASKS
    seed: int
    rate: Optional[float]
    kinds: Tuple[str, ...]
    lexicons: Optional[str]
    literal_da: bool = False


class Synthesizer:
    def __init__(self, spec: SynthSpec, resources: Optional[Resources] = None):
        self.spec = spec
        self.res = resources or Resources(spec.lexicons)
        self.kinds = tuple(PerturbationKind(k) for k in spec.kinds)

    def plan(self, item_id: str, tag: LanguageTag) -> PerturbationPlan:
        kinds = self.kinds or self.res.available_kinds(tag)
        if not kinds:
            raise MissingResource(ALL_KINDS[0], tag.key, "any perturbation resource")
        return PerturbationPlan(kinds, self.spec.rate or DEFAULT_RATE, derive_seed(self.spec.seed, item_id), tag)

    def one(self, item) -> Tuple[Optional[str], Optional[str]]:
        """Return (output line, None) or (None, skip reason)."""
        task = self.spec.task
        if task == "translation":
            return make_translation_record(item).dumps(), None
        if isinstance(item, Mono):
            ident, tag, text, domain = item
        else:
            ident, tag, text, domain = item.id, item.tgt_tag, item.tgt_text, item.domain
        plan = self.plan(ident, tag)
        lex, trie = self.res.lexicons, self.res.trie(tag)
        try:
            if task == "perturb":
                out, elog = apply_perturbations(text, plan, lex, trie)
                obj = {"id": ident, "tag": format_tag(tag), "original": nfc(text), "perturbed": out, "log": elog.to_json()}
                return json.dumps(obj, ensure_ascii=False, separators=(",", ":")), None
            if task == "gec":
                return make_grammar_record(text, tag, plan, lex, trie, domain).dumps(), None
            if task == "ape":
                return make_ape_record(item, plan, lex, trie).dumps(), None
            if task == "errmark":
                return make_error_mark_record(item, plan, lex, trie).dumps(), None
            if task == "errmark-correct":
                return make_error_mark_and_correct_record(item, plan, lex, trie).dumps(), None
            if task in ("da", "qe"):
                if item.score is None:
                    return None, "no_base_score"
                res = synth_da(item, plan, item.score, lex, trie, literal=self.spec.literal_da)
                return (res.da if task == "da" else res.qe).dumps(), None
        except RecordSkipped:
            return None, "no_edit"
        except PerturbationError as e:
            log.debug("record %s: %s", ident, e)
            return None, "perturbation_error"
        raise ConfigError(f"unknown task {task!r}")

    def process(self, chunk: Sequence) -> List[Tuple[Optional[str], Optional[str]]]:
        return [self.one(x) for x in chunk]


_WORKER: Optional[Synthesizer] = None


def _init_worker(spec: SynthSpec) -> None:
    global _WORKER
    _WORKER = Synthesizer(spec)


def _work(chunk: Sequence) -> List[Tuple[Optional[str], Optional[str]]]:
    assert _WORKER is not None
    return _WORKER.process(chunk)


def map_ordered(spec: SynthSpec, items: Iterable, chunk_size: int, jobs: int) -> Iterator[Tuple[Optional[str], Optional[str]]]:
    """Process ``items`` in chunks, in parallel when jobs > 1; output keeps input order."""
    if jobs <= 1:
        synth = Synthesizer(spec)
        for chunk in _chunks(items, chunk_size):
            yield from synth.process(chunk)
        return
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(spec,)) as pool:
        pending = []
        for chunk in _chunks(items, chunk_size):
            pending.append(pool.submit(_work, chunk))
            # bound memory: keep at most 2 * jobs chunks in flight
            while len(pending) >= 2 * jobs:
                yield from pending.pop(0).result()
        for fut in pending:
            yield from fut.result()


# ---------------------------------------------------------------- runners


def _attach_base_scores(cfg: RunConfig, pairs: List[SentencePair]) -> List[SentencePair]:
    need = [i for i, p in enumerate(pairs) if p.score is None]
    if not need:
        return pairs
    scorer = make_scorer(cfg.scorer or "stub")
    groups: Dict[Tuple[LanguageTag, LanguageTag], List[int]] = defaultdict(list)
    for i in need:
        groups[(pairs[i].src_tag, pairs[i].tgt_tag)].append(i)
    out = list(pairs)
    for (s, t), idx in groups.items():
        got = run_batched(lambda b: scorer.score(b, s, t), [(out[i].src_text, out[i].tgt_text) for i in idx], cfg.batch_size, cfg.in_flight)
        for i, sc in zip(idx, got):
            if sc is not None:
                out[i] = out[i].with_score(max(1.0, min(100.0, float(sc))))
    return out


def run_perturb_or_synth(cfg: RunConfig, manifest: RunManifest) -> None:
    task = "perturb" if cfg.command == "perturb" else cfg.task
    rate = cfg.rate if cfg.command == "perturb" else cfg.task_rate()
    spec = SynthSpec(task, cfg.seed, rate, tuple(cfg.kinds), cfg.lexicons, cfg.literal_da)
    stats = CorpusStats()
    src = _open_in(cfg.input)
    hin = HashingReader(src)
    reader = _reader(cfg, hin, "src_tag" if cfg.format == "text" else "tgt_tag")
    items: Iterable = reader
    if task in ("da", "qe"):
        items = (p for chunk in _chunks(reader, cfg.chunk_size) for p in _attach_base_scores(cfg, chunk))
    n = 0
    with _Timer(manifest, task), _Output(cfg.output) as out:
        for line, reason in map_ordered(spec, items, cfg.chunk_size, cfg.jobs):
            if line is None:
                stats.reject(reason)
                continue
            stats.keep()
            out.write_line(line)
            n += 1
    if src is not sys.stdin.buffer:
        src.close()
    stats.check()
    manifest.note_input("input", cfg.input, hin, reader)
    manifest.note_output("output", cfg.output, out, n)
    manifest.stats[task] = stats.to_json()


def run_clean(cfg: RunConfig, manifest: RunManifest) -> None:
    scorer = make_scorer(cfg.scorer) if "qe_score" in cfg.stages else None
    pipe = CleanPipeline(cfg.policy(), ScriptClassifier(), scorer, cfg.chunk_size)
    src = _open_in(cfg.input)
    hin = HashingReader(src)
    reader = _reader(cfg, hin)
    fmt = cfg.out_format or ("jsonl" if cfg.format == "jsonl" else "tsv")
    n = 0
    vout = None
    with _Timer(manifest, "clean"), ExitStack() as stack:
        out = stack.enter_context(_Output(cfg.output))
        if cfg.verdicts:
            vout = stack.enter_context(_Output(cfg.verdicts))
        for pair, verdict in pipe.run(reader):
            if vout is not None:
                vout.write_line(verdict.dumps())
            if verdict.kept:
                n += write_pairs([pair], out, fmt)
    if src is not sys.stdin.buffer:
        src.close()
    pipe.stats.check()
    manifest.note_input("input", cfg.input, hin, reader)
    manifest.note_output("output", cfg.output, out, n)
    if vout is not None:
        manifest.note_output("verdicts", cfg.verdicts, vout, pipe.stats.total)
    manifest.stats["clean"] = pipe.stats.to_json()
    if pipe.thresholds:
        manifest.thresholds = pipe.thresholds


def _read_lines(path: str, manifest: RunManifest, name: str) -> List[str]:
    src = _open_in(path)
    hin = HashingReader(src)
    reader = TextReader(hin, LanguageTag("WestGermanic", "und", "Latn", False))
    out = [m.text for m in reader]
    if src is not sys.stdin.buffer:
        src.close()
    manifest.note_input(name, path, hin, reader)
    return out


def run_align(cfg: RunConfig, manifest: RunManifest) -> None:
    src_tag, tgt_tag = cfg.tag("src_tag"), cfg.tag("tgt_tag")
    src = _read_lines(cfg.input, manifest, "src")
    tgt = _read_lines(cfg.tgt_input, manifest, "tgt")
    if not src or not tgt:
        aligned = []
    else:
        with _Timer(manifest, "align"):
            aligned = align_sentences(src, tgt, make_scorer(cfg.scorer or "stub"), cfg.threshold, src_tag, tgt_tag, cfg.band)
    fmt = cfg.out_format or "jsonl"
    with _Output(cfg.output) as out:
        for k, a in enumerate(aligned, 1):
            pair = SentencePair(
                str(k), src_tag, tgt_tag, src[a.src], tgt[a.tgt], cfg.domain, score=max(1.0, min(100.0, a.score)),
                meta=(str(a.src), str(a.tgt)),
            )
            write_pairs([pair], out, fmt)
    manifest.note_output("output", cfg.output, out, len(aligned))
    manifest.stats["align"] = {"src_sentences": len(src), "tgt_sentences": len(tgt), "aligned": len(aligned)}


def run_pivot(cfg: RunConfig, manifest: RunManifest) -> None:
    src = _open_in(cfg.input)
    hin = HashingReader(src)
    reader = _reader(cfg, hin)
    pairs = list(reader)
    if src is not sys.stdin.buffer:
        src.close()
    manifest.note_input("input", cfg.input, hin, reader)
    cp = Checkpoint(cfg.checkpoint) if cfg.checkpoint else None
    with _Timer(manifest, "pivot"):
        res = pivot_translate(
            pairs, cfg.tag("pivot_tag"), cfg.tag("target_tag"),
            make_translator(cfg.translator), make_scorer(cfg.scorer or "stub"),
            cfg.batch_size, cfg.in_flight, cp,
        )
    fmt = cfg.out_format or "jsonl"
    with _Output(cfg.output) as out:
        n = write_pairs(res.pairs, out, fmt)
    manifest.note_output("output", cfg.output, out, n)
    manifest.stats["pivot"] = {"total": len(pairs), "kept": n, "rejected": len(pairs) - n}
    manifest.thresholds = res.thresholds


def _read_passages(reader: TextReader, tag: LanguageTag, domain: str) -> List[Passage]:
    """Blank-line separated passages; TextReader drops blank lines, so track line numbers."""
    passages: List[Passage] = []
    cur: List[str] = []
    last = None
    for m in reader:
        ln = int(m.id)
        if last is not None and ln != last + 1 and cur:
            passages.append(Passage(str(len(passages) + 1), tag, tuple(cur), domain))
            cur = []
        cur.append(m.text)
        last = ln
    if cur:
        passages.append(Passage(str(len(passages) + 1), tag, tuple(cur), domain))
    return passages


def run_backtranslate(cfg: RunConfig, manifest: RunManifest) -> None:
    src_tag, tgt_tag = cfg.tag("src_tag"), cfg.tag("tgt_tag")
    src = _open_in(cfg.input)
    hin = HashingReader(src)
    reader = TextReader(hin, src_tag, cfg.domain)
    kw = dict(batch_size=cfg.batch_size, in_flight=cfg.in_flight, checkpoint_dir=cfg.checkpoint)
    if cfg.checkpoint:
        Path(cfg.checkpoint).mkdir(parents=True, exist_ok=True)
    translator, scorer = make_translator(cfg.translator), make_scorer(cfg.scorer or "stub")
    if cfg.paragraphs:
        passages = _read_passages(reader, src_tag, cfg.domain)
        manifest.note_input("input", cfg.input, hin, reader)
        with _Timer(manifest, "backtranslate"):
            outs, state = paragraph_back_translate(passages, tgt_tag, translator, scorer, cfg.rounds, **kw) if passages else ([], None)
        with _Output(cfg.output) as out:
            for orig, p in zip(passages, outs):
                obj = {"id": p.id, "src_tag": format_tag(tgt_tag), "tgt_tag": format_tag(src_tag),
                       "src": list(p.sentences), "tgt": list(orig.sentences), "domain": p.domain}
                out.write_line(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
        n = len(outs)
        total = len(passages)
    else:
        texts = [m.text for m in reader]
        manifest.note_input("input", cfg.input, hin, reader)
        with _Timer(manifest, "backtranslate"):
            pairs, state = iterative_back_translate(texts, src_tag, tgt_tag, translator, scorer, cfg.rounds, cfg.domain, **kw) if texts else ([], None)
        with _Output(cfg.output) as out:
            n = write_pairs(pairs, out, cfg.out_format or "jsonl")
        total = len(texts)
    if src is not sys.stdin.buffer:
        src.close()
    manifest.note_output("output", cfg.output, out, n)
    manifest.stats["backtranslate"] = {
        "total": total,
        "kept": n,
        "rounds": cfg.rounds,
        "completed_rounds": 0 if state is None else state.rounds - len(state.failures),
        "failed_rounds": [] if state is None else [{"round": r, "error": e} for r, e in state.failures],
    }


def score_report(rows: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """Corpus and per-segment metrics for rows with ``hyp``/``ref`` (and optional spans/scores)."""
    hyps = [r["hyp"] for r in rows]
    refs = [r["ref"] for r in rows]
    report: Dict[str, Any] = {"segments": len(rows), "corpus": {}, "per_segment": []}
    if rows:
        report["corpus"] = {"bleu": bleu(hyps, refs), "chrf3": corpus_chrf(hyps, refs), "ter": corpus_ter(hyps, refs)}
    f1s = []
    for r in rows:
        seg = {
            "bleu": bleu_from_stats(bleu_stats(r["hyp"], r["ref"])),
            "chrf3": chrf(r["hyp"], r["ref"]),
            "ter": ter(r["hyp"], r["ref"]),
        }
        if "pred_spans" in r and "gold_spans" in r:
            length = int(r.get("length") or len(tokenize(r["hyp"])))
            seg["span_f1"] = span_f1([tuple(s) for s in r["pred_spans"]], [tuple(s) for s in r["gold_spans"]], length)
            f1s.append(seg["span_f1"])
        report["per_segment"].append(seg)
    if f1s:
        report["corpus"]["span_f1"] = sum(f1s) / len(f1s)
    scored = [(float(r["pred_score"]), float(r["gold_score"])) for r in rows if "pred_score" in r and "gold_score" in r]
    if len(scored) >= 2:
        try:
            report["corpus"]["spearman"] = spearman([a for a, _ in scored], [b for _, b in scored])
        except UndefinedCorrelation:
            report["corpus"]["spearman"] = None
    return report


def run_score(cfg: RunConfig, manifest: RunManifest) -> None:
    rows: List[Dict[str, Any]] = []
    if cfg.hyp and cfg.ref:
        hyps = _read_lines_raw(cfg.hyp, manifest, "hyp")
        refs = _read_lines_raw(cfg.ref, manifest, "ref")
        if len(hyps) != len(refs):
            raise DataError(f"--hyp has {len(hyps)} lines, --ref has {len(refs)}")
        rows = [{"hyp": h, "ref": r} for h, r in zip(hyps, refs)]
    else:
        src = _open_in(cfg.input)
        hin = HashingReader(src)
        bad: List[LineError] = []
        nlines = 0
        for nlines, raw in enumerate(hin, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw.decode("utf-8"))
                if not isinstance(obj.get("hyp"), str) or not isinstance(obj.get("ref"), str):
                    raise ValueError("needs string fields 'hyp' and 'ref'")
                obj["hyp"], obj["ref"] = nfc(obj["hyp"]), nfc(obj["ref"])
                rows.append(obj)
            except (ValueError, UnicodeDecodeError, AttributeError) as e:
                bad.append(LineError(nlines, 0, str(e)))
        if src is not sys.stdin.buffer:
            src.close()
        manifest.note_input("input", cfg.input, hin, _Parsed(nlines, bad))
    with _Timer(manifest, "score"):
        report = score_report(rows)
    with _Output(cfg.output) as out:
        out.write_line(json.dumps(report, ensure_ascii=False))
    manifest.note_output("output", cfg.output, out, 1)
    manifest.stats["score"] = {"segments": len(rows)}


class _Parsed(NamedTuple):
    lines_read: int
    errors: List[LineError]

    @property
    def error_count(self) -> int:
        return len(self.errors)


def _read_lines_raw(path: str, manifest: RunManifest, name: str) -> List[str]:
    """Keep every line (including blanks) so twin files stay aligned."""
    src = _open_in(path)
    hin = HashingReader(src)
    out = []
    bad: List[LineError] = []
    for k, raw in enumerate(hin, 1):
        try:
            out.append(nfc(raw.rstrip(b"\r\n").decode("utf-8")))
        except UnicodeDecodeError as e:
            bad.append(LineError(k, e.start, f"invalid UTF-8: {e.reason}"))
            out.append("")
    if src is not sys.stdin.buffer:
        src.close()
    manifest.note_input(name, path, hin, _Parsed(len(out), bad))
    return out


# ---------------------------------------------------------------- stats

HISTOGRAM_EDGES = (5, 10, 20, 30, 50, 100)


def _bucket(n: int) -> str:
    lo = 0
    for edge in HISTOGRAM_EDGES:
        if n <= edge:
            return f"{lo + 1}-{edge}" if lo else f"0-{edge}"
        lo = edge
    return f">{HISTOGRAM_EDGES[-1]}"


def _script_ok(text: str, tag: LanguageTag) -> bool:
    try:
        return dominant_script(text)[0] == tag.script
    except IndeterminateScript:
        return False


def corpus_report(pairs: Iterable[SentencePair]) -> Dict[str, Any]:
    """Per language pair: counts, token totals, length histograms and script consistency."""
    groups: Dict[str, Dict[str, Any]] = {}
    total = 0
    for p in pairs:
        total += 1
        key = f"{format_tag(p.src_tag)}#{format_tag(p.tgt_tag)}"
        g = groups.get(key)
        if g is None:
            g = groups[key] = {
                "pairs": 0,
                "src_tokens": 0,
                "tgt_tokens": 0,
                "src_length_histogram": Counter(),
                "tgt_length_histogram": Counter(),
                "_consistent": 0,
            }
        ns, nt = len(tokenize(p.src_text)), len(tokenize(p.tgt_text))
        g["pairs"] += 1
        g["src_tokens"] += ns
        g["tgt_tokens"] += nt
        g["src_length_histogram"][_bucket(ns)] += 1
        g["tgt_length_histogram"][_bucket(nt)] += 1
        if _script_ok(p.src_text, p.src_tag) and _script_ok(p.tgt_text, p.tgt_tag):
            g["_consistent"] += 1
    order = [_bucket(e) for e in HISTOGRAM_EDGES] + [_bucket(HISTOGRAM_EDGES[-1] + 1)]
    out = {}
    for key in sorted(groups):
        g = groups[key]
        out[key] = {
            "pairs": g["pairs"],
            "src_tokens": g["src_tokens"],
            "tgt_tokens": g["tgt_tokens"],
            "src_length_histogram": {b: g["src_length_histogram"][b] for b in order if g["src_length_histogram"][b]},
            "tgt_length_histogram": {b: g["tgt_length_histogram"][b] for b in order if g["tgt_length_histogram"][b]},
            "script_consistency": g["_consistent"] / g["pairs"],
        }
    return {"total_pairs": total, "language_pairs": out}


def run_stats(cfg: RunConfig, manifest: RunManifest) -> None:
    src = _open_in(cfg.input)
    hin = HashingReader(src)
    reader = _reader(cfg, hin)
    with _Timer(manifest, "stats"):
        report = corpus_report(reader)
    if src is not sys.stdin.buffer:
        src.close()
    manifest.note_input("input", cfg.input, hin, reader)
    with _Output(cfg.output) as out:
        out.write_line(json.dumps(report, ensure_ascii=False))
    manifest.note_output("output", cfg.output, out, 1)
    manifest.stats["stats"] = report


RUNNERS: Dict[str, Callable[[RunConfig, RunManifest], None]] = {
    "clean": run_clean,
    "perturb": run_perturb_or_synth,
    "synth": run_perturb_or_synth,
    "score": run_score,
    "align": run_align,
    "pivot": run_pivot,
    "backtranslate": run_backtranslate,
    "stats": run_stats,
}


def run(cfg: RunConfig) -> RunManifest:
    """Validate, execute the selected pipeline and return its manifest.

    ConfigError is raised before any input is opened.  DataError (or a
    manifest with exit_code 1) signals unreadable or too-dirty input.
    """
    cfg.validate()
    if cfg.command not in RUNNERS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    manifest = RunManifest(cfg.command, cfg.snapshot())
    t0 = time.perf_counter()
    try:
        RUNNERS[cfg.command](cfg, manifest)
    except OSError as e:
        raise DataError(str(e)) from e
    manifest.timings["total"] = round(time.perf_counter() - t0, 6)
    manifest.check_budget(cfg.error_budget)
    return manifest
