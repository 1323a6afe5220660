"""Language tags, the bundled 38-language registry and script detection."""

from __future__ import annotations

import bisect
import functools
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

FAMILIES = (
    "Magadhi",
    "WesternIndic",
    "CentralIndic",
    "Maharashtri",
    "Vedic",
    "Dravidian",
    "TibetoBurman",
    "AustroAsiatic",
    "WestGermanic",
)

REGISTRY_FORMAT_VERSION = 1

# Code-point ranges (inclusive) per script. Latin includes the extended and
# combining blocks so romanized Indic text (ā, ṭ, ...) is recognized.
SCRIPT_BLOCKS: Dict[str, Tuple[Tuple[int, int], ...]] = {
    "Latn": (
        (0x0041, 0x005A),
        (0x0061, 0x007A),
        (0x00C0, 0x00FF),
        (0x0100, 0x024F),
        (0x0300, 0x036F),
        (0x1E00, 0x1EFF),
    ),
    "Deva": ((0x0900, 0x097F), (0x1CD0, 0x1CFF), (0xA8E0, 0xA8FF)),
    "Beng": ((0x0980, 0x09FF),),
    "Guru": ((0x0A00, 0x0A7F),),
    "Gujr": ((0x0A80, 0x0AFF),),
    "Orya": ((0x0B00, 0x0B7F),),
    "Taml": ((0x0B80, 0x0BFF),),
    "Telu": ((0x0C00, 0x0C7F),),
    "Knda": ((0x0C80, 0x0CFF),),
    "Mlym": ((0x0D00, 0x0D7F),),
    "Sinh": ((0x0D80, 0x0DFF),),
    "Arab": (
        (0x0600, 0x06FF),
        (0x0750, 0x077F),
        (0x08A0, 0x08FF),
        (0xFB50, 0xFDFF),
        (0xFE70, 0xFEFF),
    ),
    "Mtei": ((0xAAE0, 0xAAFF), (0xABC0, 0xABFF)),
    "Olck": ((0x1C50, 0x1C7F),),
    "Wara": ((0x118A0, 0x118FF),),
}

_TAG_RE = re.compile(r"^(?P<family>[A-Za-z]+)\+(?P<code>[a-z]{3,5})_(?P<script>[A-Z][a-z]{3})$")


class TagParseError(ValueError):
    """Raised for strings that do not follow FAMILY+CODE_SCRIPT."""


class IndeterminateScript(ValueError):
    """Raised when a text contains no letters to classify."""


@dataclass(frozen=True)
class LanguageTag:
    family: str
    code: str
    script: str
    registered: bool = field(default=True, compare=False)

    def __str__(self) -> str:
        return format_tag(self)

    @property
    def key(self) -> str:
        return f"{self.code}_{self.script}"


@dataclass(frozen=True)
class LanguageInfo:
    id: int
    tag: LanguageTag
    display_name: str
    unicode_blocks: Tuple[Tuple[int, int], ...]

    @property
    def group(self) -> str:
        return self.tag.family


class Registry:
    """Immutable lookup table over :class:`LanguageInfo` entries."""

    def __init__(self, entries: Iterable[LanguageInfo], version: int = REGISTRY_FORMAT_VERSION):
        self.version = version
        self.entries: Tuple[LanguageInfo, ...] = tuple(entries)
        self._by_key: Dict[Tuple[str, str], LanguageInfo] = {}
        for info in self.entries:
            k = (info.tag.code, info.tag.script)
            if k in self._by_key:
                raise ValueError(f"duplicate registry entry {info.tag.key}")
            self._by_key[k] = info

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def lookup(self, code: str, script: str) -> Optional[LanguageInfo]:
        return self._by_key.get((code, script))

    def by_key(self, key: str) -> Optional[LanguageInfo]:
        code, _, script = key.partition("_")
        return self.lookup(code, script)

    def tags(self) -> List[LanguageTag]:
        return [e.tag for e in self.entries]

    def first_with_script(self, script: str) -> Optional[LanguageTag]:
        for e in self.entries:
            if e.tag.script == script:
                return e.tag
        return None

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Registry":
        version = REGISTRY_FORMAT_VERSION
        entries = []
        for lineno, raw in enumerate(lines, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                m = re.search(r"format version (\d+)", line)
                if m:
                    version = int(m.group(1))
                continue
            cols = line.split("\t")
            if len(cols) != 5:
                raise ValueError(f"registry line {lineno}: expected 5 columns, got {len(cols)}")
            id_, family, code, script, name = cols
            if family not in FAMILIES:
                raise ValueError(f"registry line {lineno}: unknown family {family!r}")
            if script not in SCRIPT_BLOCKS:
                raise ValueError(f"registry line {lineno}: no unicode blocks for script {script!r}")
            tag = LanguageTag(family, code, script)
            entries.append(LanguageInfo(int(id_), tag, name.strip(), SCRIPT_BLOCKS[script]))
        if version != REGISTRY_FORMAT_VERSION:
            raise ValueError(f"unsupported registry format version {version}")
        return cls(entries, version)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Registry":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh)


@functools.lru_cache(maxsize=1)
def default_registry() -> Registry:
    text = resources.files("corpusforge").joinpath("data/languages.tsv").read_text(encoding="utf-8")
    return Registry.from_lines(text.splitlines())


_active: Optional[Registry] = None


def set_registry(registry: Optional[Registry]) -> None:
    """Override the process-wide registry (``None`` restores the bundled one)."""
    global _active
    _active = registry


def get_registry() -> Registry:
    return _active if _active is not None else default_registry()


def parse_tag(text: str, registry: Optional[Registry] = None) -> LanguageTag:
    """Parse ``"CentralIndic+hin_Deva"`` into a :class:`LanguageTag`.

    Unknown (code, script) pairs parse with ``registered=False``; a family
    that contradicts the registry entry is an error.
    """
    m = _TAG_RE.match(text)
    if m is None:
        if "+" not in text:
            raise TagParseError(f"{text!r}: missing '+' between family and code")
        family, _, rest = text.partition("+")
        if not re.fullmatch(r"[A-Za-z]+", family):
            raise TagParseError(f"{text!r}: bad family segment {family!r}")
        if "_" not in rest:
            raise TagParseError(f"{text!r}: missing '_' between code and script in {rest!r}")
        code, _, script = rest.partition("_")
        if not re.fullmatch(r"[a-z]{3,5}", code):
            raise TagParseError(f"{text!r}: bad code segment {code!r}")
        raise TagParseError(f"{text!r}: bad script segment {script!r}")
    family, code, script = m.group("family", "code", "script")
    if family not in FAMILIES:
        raise TagParseError(f"{text!r}: unknown family {family!r}")
    reg = registry or get_registry()
    info = reg.lookup(code, script)
    if info is None:
        return LanguageTag(family, code, script, registered=False)
    if info.tag.family != family:
        raise TagParseError(f"{text!r}: {code}_{script} belongs to {info.tag.family}, not {family}")
    return LanguageTag(family, code, script)


def format_tag(tag: LanguageTag) -> str:
    return f"{tag.family}+{tag.code}_{tag.script}"


def tag_for_key(key: str, registry: Optional[Registry] = None) -> LanguageTag:
    """Resolve a short ``code_Script`` key (or a full tag) against the registry."""
    if "+" in key:
        return parse_tag(key, registry)
    info = (registry or get_registry()).by_key(key)
    if info is None:
        raise TagParseError(f"{key!r}: not a registered code_Script key")
    return info.tag


class _ScriptTable:
    def __init__(self, blocks: Dict[str, Sequence[Tuple[int, int]]]):
        spans = sorted((lo, hi, script) for script, rs in blocks.items() for lo, hi in rs)
        self.starts = [s[0] for s in spans]
        self.spans = spans
        self.cache: Dict[str, Optional[str]] = {}

    def script_of(self, ch: str) -> Optional[str]:
        try:
            return self.cache[ch]
        except KeyError:
            pass
        cp = ord(ch)
        i = bisect.bisect_right(self.starts, cp) - 1
        script = None
        if i >= 0:
            lo, hi, s = self.spans[i]
            if cp <= hi:
                script = s
        if len(self.cache) < 65536:
            self.cache[ch] = script
        return script


_TABLE = _ScriptTable(SCRIPT_BLOCKS)
_LETTER_CACHE: Dict[str, bool] = {}


def _is_letter(ch: str) -> bool:
    r = _LETTER_CACHE.get(ch)
    if r is None:
        r = unicodedata.category(ch)[0] in "LM"
        if len(_LETTER_CACHE) < 65536:
            _LETTER_CACHE[ch] = r
    return r


def script_of_char(ch: str) -> Optional[str]:
    return _TABLE.script_of(ch)


def script_counts(text: str) -> Tuple[Dict[str, int], int]:
    """Count letter code points per script; returns (counts, total letters)."""
    counts: Dict[str, int] = {}
    total = 0
    for ch in text:
        if not _is_letter(ch):
            continue
        total += 1
        s = _TABLE.script_of(ch)
        if s is not None:
            counts[s] = counts.get(s, 0) + 1
    return counts, total


def dominant_script(text: str) -> Tuple[str, float]:
    """Return the script covering the largest share of letters, and that share.

    Letters are code points of category L* or M*.  Ties resolve to the
    alphabetically first script code.  Raises :class:`IndeterminateScript`
    when the text has no letters, or none inside any known block.
    """
    counts, total = script_counts(text)
    if total == 0:
        raise IndeterminateScript("text contains no letters")
    if not counts:
        raise IndeterminateScript("no letters fall in a known script block")
    script = min(counts, key=lambda s: (-counts[s], s))
    return script, counts[script] / total
