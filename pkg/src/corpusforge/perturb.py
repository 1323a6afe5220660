"""Seeded, budgeted error injection over tokenized text.

Every run of :func:`apply_perturbations` returns the perturbed text and an
:class:`EditLog` that can replay the perturbation on the original text
(:func:`reconstruct`) and locate the erroneous tokens in the output.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import random
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .lang_registry import LanguageTag
from .text import detokenize, is_punct, is_single_token, nfc, tokenize

log = logging.getLogger(__name__)

MIN_RATE = 0.0005
MAX_RATE = 0.5
DEFAULT_RATE = 0.001

DEFAULT_PUNCTUATION = (".", ",", ";", ":", "!", "?", "'", '"', "-", "(", ")", "।")


class PerturbationKind(str, Enum):
    token_noise = "token_noise"
    pronoun_swap = "pronoun_swap"
    adposition_swap = "adposition_swap"
    connective_swap = "connective_swap"
    verb_form = "verb_form"
    lexical_cohesion = "lexical_cohesion"
    punctuation = "punctuation"
    grammar_inflect = "grammar_inflect"
    mask = "mask"
    spelling = "spelling"
    word_order = "word_order"


ALL_KINDS: Tuple[PerturbationKind, ...] = tuple(PerturbationKind)


class PerturbationError(ValueError):
    pass


class MissingResource(PerturbationError):
    def __init__(self, kind: PerturbationKind, language: str, what: str):
        super().__init__(f"{kind.value} needs {what} for {language}")
        self.kind = kind
        self.language = language


class CorruptLog(PerturbationError):
    pass


@dataclass(frozen=True)
class PerturbationPlan:
    kinds: Tuple[PerturbationKind, ...]
    rate: float = DEFAULT_RATE
    seed: int = 0
    language: Optional[LanguageTag] = None

    def __post_init__(self):
        kinds = tuple(PerturbationKind(k) for k in self.kinds)
        object.__setattr__(self, "kinds", kinds)
        if not kinds:
            raise PerturbationError("plan needs at least one perturbation kind")
        if not (MIN_RATE <= self.rate <= MAX_RATE):
            raise PerturbationError(f"rate {self.rate} outside [{MIN_RATE}, {MAX_RATE}]")
        if not (0 <= self.seed < 2**64):
            raise PerturbationError("seed must be an unsigned 64-bit integer")


def derive_seed(global_seed: int, record_id: str) -> int:
    """Stable per-record seed, independent of processing order."""
    h = hashlib.blake2b(f"{global_seed}\x1f{record_id}".encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "big")


def token_budget(rate: float, n_tokens: int) -> int:
    """round-half-up(rate * N), floored at 1."""
    exact = Decimal(repr(rate)) * n_tokens
    return max(1, int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP)))


# --------------------------------------------------------------------------
# resources


def _single_tokens(words: Iterable[str], what: str) -> Tuple[str, ...]:
    out = []
    seen = set()
    for w in words:
        w = nfc(w.strip())
        if not w or w in seen:
            continue
        if not is_single_token(w):
            log.debug("skipping multi-token %s entry %r", what, w)
            continue
        seen.add(w)
        out.append(w)
    return tuple(out)


@dataclass(frozen=True)
class Lexicon:
    """Word lists for one language.  Entries that are not single tokens are dropped."""

    pronouns: Tuple[str, ...] = ()
    adpositions: Tuple[str, ...] = ()
    connectives: Tuple[str, ...] = ()
    punctuation: Tuple[str, ...] = DEFAULT_PUNCTUATION
    verb_forms: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    tokens: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("pronouns", "adpositions", "connectives", "tokens"):
            object.__setattr__(self, name, _single_tokens(getattr(self, name), name))
        object.__setattr__(self, "punctuation", tuple(p for p in _single_tokens(self.punctuation, "punctuation") if is_punct(p)))
        table = {}
        for surface, alts in self.verb_forms.items():
            surface = nfc(surface)
            keep = tuple(a for a in _single_tokens(alts, "verb form") if a != surface)
            if is_single_token(surface) and keep:
                table[surface] = keep
        object.__setattr__(self, "verb_forms", table)

    @property
    def function_words(self) -> Set[str]:
        return {w.casefold() for w in self.pronouns + self.adpositions + self.connectives}

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "Lexicon":
        d = Path(directory)

        def lines(name: str) -> List[str]:
            p = d / f"{name}.txt"
            if not p.exists():
                return []
            return [ln for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip() and not ln.startswith("# ")]

        verbs: Dict[str, Tuple[str, ...]] = {}
        for ln in lines("verb_forms"):
            surface, _, alts = ln.partition("\t")
            verbs[surface.strip()] = tuple(a.strip() for a in alts.split(",") if a.strip())
        punct = lines("punctuation")
        return cls(
            pronouns=tuple(lines("pronouns")),
            adpositions=tuple(lines("adpositions")),
            connectives=tuple(lines("connectives")),
            punctuation=tuple(punct) if punct else DEFAULT_PUNCTUATION,
            verb_forms=verbs,
            tokens=tuple(lines("tokens")),
        )


class LexiconSet:
    """Lexicons keyed by ``code_Script``; loaded from ``<root>/<code_Script>/<category>.txt``."""

    def __init__(self, lexicons: Optional[Mapping[str, Lexicon]] = None):
        self._lex: Dict[str, Lexicon] = dict(lexicons or {})

    def __contains__(self, key: str) -> bool:
        return key in self._lex

    def keys(self):
        return self._lex.keys()

    def get(self, language: Union[LanguageTag, str, None]) -> Lexicon:
        if language is None:
            return Lexicon()
        key = language.key if isinstance(language, LanguageTag) else language
        return self._lex.get(key, Lexicon())

    def add(self, key: str, lexicon: Lexicon) -> None:
        self._lex[key] = lexicon

    @classmethod
    def load(cls, root: Union[str, Path]) -> "LexiconSet":
        root = Path(root)
        lex = {}
        for sub in sorted(p for p in root.iterdir() if p.is_dir()):
            lex[sub.name] = Lexicon.load(sub)
        return cls(lex)

    @classmethod
    def bundled(cls) -> "LexiconSet":
        from importlib import resources

        with resources.as_file(resources.files("corpusforge").joinpath("data/lexicons")) as p:
            return cls.load(p)


class InflectionTrie:
    """Prefix tree over a monolingual vocabulary for looking up inflected siblings.

    Two words are siblings when their common prefix is at least
    ``max(min_stem_len, ceil(0.6 * min(len(a), len(b))))`` characters long.
    """

    _END = "\0"

    def __init__(self, vocabulary: Mapping[str, int], min_stem_len: int = 3):
        if min_stem_len < 2:
            raise ValueError("min_stem_len must be >= 2")
        if not vocabulary:
            raise ValueError("vocabulary is empty")
        self.min_stem_len = min_stem_len
        self.freq: Dict[str, int] = {}
        for w, f in vocabulary.items():
            w = nfc(w)
            if w:
                self.freq[w] = self.freq.get(w, 0) + int(f)
        self.root: dict = {}
        for w in self.freq:
            node = self.root
            for ch in w:
                node = node.setdefault(ch, {})
            node[self._END] = w
        self._cache: Dict[str, Tuple[str, ...]] = {}

    def __contains__(self, word: str) -> bool:
        return word in self.freq

    def __len__(self) -> int:
        return len(self.freq)

    def _subtree_words(self, node: dict) -> Iterable[str]:
        stack = [node]
        while stack:
            n = stack.pop()
            for k, v in n.items():
                if k == self._END:
                    yield v
                else:
                    stack.append(v)

    def siblings(self, word: str) -> Tuple[str, ...]:
        """Siblings ordered by descending frequency, then lexically."""
        try:
            return self._cache[word]
        except KeyError:
            pass
        node = self.root
        for ch in word[: self.min_stem_len]:
            node = node.get(ch)
            if node is None:
                break
        found = []
        if node is not None and len(word) >= self.min_stem_len:
            for v in self._subtree_words(node):
                if v == word:
                    continue
                need = max(self.min_stem_len, math.ceil(0.6 * min(len(word), len(v))))
                lcp = 0
                for a, b in zip(word, v):
                    if a != b:
                        break
                    lcp += 1
                if lcp >= need:
                    found.append(v)
        found.sort(key=lambda v: (-self.freq[v], v))
        out = tuple(found)
        if len(self._cache) < 200_000:
            self._cache[word] = out
        return out

    def query(self, word: str) -> frozenset:
        return frozenset(self.siblings(word))


def build_inflection_trie(vocabulary: Mapping[str, int], min_stem_len: int = 3) -> InflectionTrie:
    return InflectionTrie(vocabulary, min_stem_len)


def load_vocabulary(path: Union[str, Path]) -> Dict[str, int]:
    """Read ``word<TAB>count`` lines (count optional, default 1)."""
    vocab: Dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.rstrip("\n")
            if not ln.strip():
                continue
            w, _, f = ln.partition("\t")
            vocab[w.strip()] = vocab.get(w.strip(), 0) + (int(f) if f.strip() else 1)
    return vocab


# --------------------------------------------------------------------------
# edit log


@dataclass(frozen=True)
class Edit:
    kind: PerturbationKind
    op: str
    start: int
    end: int
    out_start: int
    out_end: int
    original: Tuple[str, ...]
    replacement: Tuple[str, ...]
    glue: Tuple[bool, ...]
    weight: int = 1

    @property
    def original_surface(self) -> str:
        return " ".join(self.original)

    @property
    def replacement_surface(self) -> str:
        return " ".join(self.replacement)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "op": self.op,
            "span": [self.start, self.end],
            "out": [self.out_start, self.out_end],
            "orig": list(self.original),
            "repl": list(self.replacement),
            "glue": [int(g) for g in self.glue],
            "weight": self.weight,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Edit":
        return cls(
            PerturbationKind(d["kind"]),
            d["op"],
            d["span"][0],
            d["span"][1],
            d["out"][0],
            d["out"][1],
            tuple(d["orig"]),
            tuple(d["repl"]),
            tuple(bool(g) for g in d["glue"]),
            d.get("weight", 1),
        )


@dataclass(frozen=True)
class EditLog:
    edits: Tuple[Edit, ...]
    token_count: int
    budget: int
    edited_positions: int
    shortfall: int = 0
    output_token_count: int = 0

    @property
    def spans(self) -> List[Tuple[int, int]]:
        return [(e.start, e.end) for e in self.edits]

    def error_spans(self) -> List[Tuple[int, int]]:
        """Erroneous token intervals in the perturbed text, merged when touching.

        A deletion leaves nothing to mark, so it marks the token that now
        follows the deletion point, or the last token at end of text.
        """
        m = self.output_token_count
        raw = []
        for e in self.edits:
            if e.out_end > e.out_start:
                raw.append((e.out_start, e.out_end))
            elif m > 0:
                s = e.out_start if e.out_start < m else m - 1
                raw.append((s, s + 1))
        raw.sort()
        merged: List[List[int]] = []
        for s, t in raw:
            if merged and s <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], t)
            else:
                merged.append([s, t])
        return [(s, t) for s, t in merged]

    def to_json(self) -> dict:
        return {
            "tokens": self.token_count,
            "out_tokens": self.output_token_count,
            "budget": self.budget,
            "edited": self.edited_positions,
            "shortfall": self.shortfall,
            "edits": [e.to_json() for e in self.edits],
        }

    @classmethod
    def from_json(cls, d: dict) -> "EditLog":
        return cls(
            tuple(Edit.from_json(e) for e in d["edits"]),
            d["tokens"],
            d["budget"],
            d["edited"],
            d.get("shortfall", 0),
            d.get("out_tokens", 0),
        )


def _assemble(
    tokens: Sequence[str], glue: Sequence[bool], edits: Sequence[Edit]
) -> Tuple[List[str], List[bool], List[Edit]]:
    """Apply sorted, non-overlapping edits; returns output tokens/glue and edits with output spans."""
    out_t: List[str] = []
    out_g: List[bool] = []
    placed: List[Edit] = []
    pos = 0
    for e in edits:
        if e.start < pos or e.end <= e.start or e.end > len(tokens):
            raise CorruptLog(f"edit span [{e.start},{e.end}) out of order or range for {len(tokens)} tokens")
        if tuple(tokens[e.start : e.end]) != e.original:
            raise CorruptLog(f"edit span [{e.start},{e.end}) does not match the original tokens")
        if len(e.replacement) != len(e.glue):
            raise CorruptLog("replacement and glue lengths differ")
        out_t.extend(tokens[pos : e.start])
        out_g.extend(glue[pos : e.start])
        s = len(out_t)
        out_t.extend(e.replacement)
        out_g.extend(e.glue)
        placed.append(
            Edit(e.kind, e.op, e.start, e.end, s, len(out_t), e.original, e.replacement, e.glue, e.weight)
        )
        pos = e.end
    out_t.extend(tokens[pos:])
    out_g.extend(glue[pos:])
    return out_t, out_g, placed


def reconstruct(original: str, log: EditLog) -> str:
    """Replay ``log`` on ``original`` and return the perturbed text."""
    toks = tokenize(nfc(original))
    if log.token_count and log.token_count != len(toks):
        raise CorruptLog(f"log expects {log.token_count} tokens, text has {len(toks)}")
    if not log.edits:
        return nfc(original)
    out_t, out_g, placed = _assemble([t.text for t in toks], [t.glued for t in toks], log.edits)
    for a, b in zip(placed, log.edits):
        if (a.out_start, a.out_end) != (b.out_start, b.out_end):
            raise CorruptLog(f"output span of edit at [{b.start},{b.end}) disagrees with replay")
    return detokenize(out_t, out_g)


# --------------------------------------------------------------------------
# the engine


class _Engine:
    def __init__(self, tokens: List[str], glue: List[bool], rng: random.Random, lex: Lexicon, trie):
        self.t = tokens
        self.g = glue
        self.n = len(tokens)
        self.rng = rng
        self.lex = lex
        self.trie = trie
        self.used = [False] * self.n
        self.deleted = 0
        self.edits: List[Edit] = []
        self.blocked: Dict[PerturbationKind, Set[int]] = {}
        self._fw = lex.function_words
        self._pool_alphabet: Optional[List[str]] = None

    def free(self, pred: Callable[[int], bool] = lambda i: True) -> List[int]:
        return [i for i in range(self.n) if not self.used[i] and pred(i)]

    def record(self, kind, op, start, end, replacement, glue, weight=1) -> Edit:
        e = Edit(kind, op, start, end, -1, -1, tuple(self.t[start:end]), tuple(replacement), tuple(glue), weight)
        for i in range(start, end):
            self.used[i] = True
        self.edits.append(e)
        return e

    def replace(self, kind, i, new, op="replace") -> Edit:
        return self.record(kind, op, i, i + 1, (new,), (self.g[i],))

    def can_delete(self) -> bool:
        return self.n - self.deleted > 1

    def delete(self, kind, i) -> Edit:
        self.deleted += 1
        return self.record(kind, "delete", i, i + 1, (), ())

    def pool_alternatives(self, tok: str) -> List[str]:
        return [w for w in self.lex.tokens if w != tok]

    # ---- per kind

    def token_noise(self, remaining: int) -> Optional[Edit]:
        kind = PerturbationKind.token_noise
        cands = self.free()
        if not cands:
            return None
        i = self.rng.choice(cands)
        ops = ["add"]
        if self.can_delete():
            ops.append("delete")
        alts = self.pool_alternatives(self.t[i])
        if alts:
            ops.append("replace")
        op = self.rng.choice(ops)
        if op == "delete":
            return self.delete(kind, i)
        if op == "replace":
            return self.replace(kind, i, self.rng.choice(alts))
        new = self.rng.choice(self.lex.tokens)
        if self.rng.random() < 0.5:
            return self.record(kind, "insert", i, i + 1, (new, self.t[i]), (False, self.g[i]))
        return self.record(kind, "insert", i, i + 1, (self.t[i], new), (self.g[i], False))

    def _swap_from(self, kind: PerturbationKind, entries: Sequence[str]) -> Optional[Edit]:
        folded = {}
        for w in entries:
            folded.setdefault(w.casefold(), w)
        if len(folded) < 2:
            return None
        cands = self.free(lambda i: self.t[i].casefold() in folded)
        if not cands:
            return None
        i = self.rng.choice(cands)
        cur = self.t[i].casefold()
        alts = [w for f, w in folded.items() if f != cur]
        new = self.rng.choice(alts)
        if self.t[i][:1].isupper() and not new[:1].isupper():
            cased = new[:1].upper() + new[1:]
            if cased.casefold() != cur:
                new = cased
        return self.replace(kind, i, new)

    def pronoun_swap(self, remaining: int) -> Optional[Edit]:
        return self._swap_from(PerturbationKind.pronoun_swap, self.lex.pronouns)

    def adposition_swap(self, remaining: int) -> Optional[Edit]:
        return self._swap_from(PerturbationKind.adposition_swap, self.lex.adpositions)

    def connective_swap(self, remaining: int) -> Optional[Edit]:
        return self._swap_from(PerturbationKind.connective_swap, self.lex.connectives)

    def verb_form(self, remaining: int) -> Optional[Edit]:
        table = self.lex.verb_forms
        cands = self.free(lambda i: self.t[i] in table)
        if not cands:
            return None
        i = self.rng.choice(cands)
        return self.replace(PerturbationKind.verb_form, i, self.rng.choice(table[self.t[i]]))

    def lexical_cohesion(self, remaining: int) -> Optional[Edit]:
        fw = self._fw
        cands = self.free(lambda i: not is_punct(self.t[i]) and self.t[i].casefold() not in fw)
        cands = [i for i in cands if self.pool_alternatives(self.t[i])]
        if not cands:
            return None
        i = self.rng.choice(cands)
        return self.replace(PerturbationKind.lexical_cohesion, i, self.rng.choice(self.pool_alternatives(self.t[i])))

    def punctuation(self, remaining: int) -> Optional[Edit]:
        kind = PerturbationKind.punctuation
        marks = self.lex.punctuation
        blocked = self.blocked.setdefault(kind, set())
        while True:
            cands = self.free(lambda i: is_punct(self.t[i]) and i not in blocked)
            if not cands:
                return None
            i = self.rng.choice(cands)
            ops = []
            if self.can_delete():
                ops.append("delete")
            alts = [m for m in marks if m != self.t[i]]
            if alts:
                ops.append("substitute")
            right = i + 1 < self.n and not self.used[i + 1] and self.t[i + 1] != self.t[i]
            left = i > 0 and not self.used[i - 1] and self.t[i - 1] != self.t[i]
            if right or left:
                ops.append("move")
            if ops:
                break
            # a lone mark with nothing to swap in is not editable
            blocked.add(i)
        op = self.rng.choice(ops)
        if op == "delete":
            return self.delete(kind, i)
        if op == "substitute":
            return self.replace(kind, i, self.rng.choice(alts), op="substitute")
        if right and (not left or self.rng.random() < 0.5):
            return self.record(kind, "move", i, i + 2, (self.t[i + 1], self.t[i]), (self.g[i + 1], self.g[i]))
        return self.record(kind, "move", i - 1, i + 1, (self.t[i], self.t[i - 1]), (self.g[i], self.g[i - 1]))

    def grammar_inflect(self, remaining: int) -> Optional[Edit]:
        trie = self.trie
        cands = self.free(lambda i: not is_punct(self.t[i]) and bool(trie.siblings(self.t[i])))
        if not cands:
            return None
        i = self.rng.choice(cands)
        return self.replace(PerturbationKind.grammar_inflect, i, self.rng.choice(trie.siblings(self.t[i])))

    def mask(self, remaining: int) -> Optional[Edit]:
        cands = [i for i in self.free() if self.pool_alternatives(self.t[i])]
        if not cands:
            return None
        i = self.rng.choice(cands)
        return self.replace(PerturbationKind.mask, i, self.rng.choice(self.pool_alternatives(self.t[i])))

    def _alphabet(self, tok: str) -> List[str]:
        if self._pool_alphabet is None:
            chars = {c for w in self.lex.tokens for c in w}
            chars.update(c for w in self.t if not is_punct(w) for c in w)
            self._pool_alphabet = sorted(chars)
        return sorted(set(self._pool_alphabet) | set(tok))

    @staticmethod
    def _valid_spelling(old: str, new: str) -> bool:
        return bool(new) and new != old and nfc(new) == new and is_single_token(new)

    def _misspell(self, tok: str) -> Optional[str]:
        alphabet = self._alphabet(tok)
        rng = self.rng
        for _ in range(16):
            op = rng.choice(("add", "remove", "substitute") if len(tok) > 1 else ("add", "substitute"))
            if op == "add":
                k = rng.randint(0, len(tok))
                new = tok[:k] + rng.choice(alphabet) + tok[k:]
            elif op == "remove":
                k = rng.randrange(len(tok))
                new = tok[:k] + tok[k + 1 :]
            else:
                k = rng.randrange(len(tok))
                new = tok[:k] + rng.choice(alphabet) + tok[k + 1 :]
            if self._valid_spelling(tok, new):
                return new
        # exhaustive fallback, still deterministic
        for k in range(len(tok) + 1):
            for c in alphabet:
                new = tok[:k] + c + tok[k:]
                if self._valid_spelling(tok, new):
                    return new
        return None

    def spelling(self, remaining: int) -> Optional[Edit]:
        kind = PerturbationKind.spelling
        blocked = self.blocked.setdefault(kind, set())
        while True:
            cands = self.free(lambda i: not is_punct(self.t[i]) and i not in blocked)
            if not cands:
                return None
            i = self.rng.choice(cands)
            new = self._misspell(self.t[i])
            if new is not None:
                return self.replace(kind, i, new, op="spell")
            blocked.add(i)

    def word_order(self, remaining: int) -> Optional[Edit]:
        kind = PerturbationKind.word_order
        top = min(4, max(2, remaining))
        for size in range(self.rng.randint(2, top), 1, -1):
            starts = [
                s
                for s in range(self.n - size + 1)
                if not any(self.used[s : s + size]) and len(set(self.t[s : s + size])) > 1
            ]
            if not starts:
                continue
            s = self.rng.choice(starts)
            group = tuple(range(s, s + size))
            orig = tuple(self.t[j] for j in group)
            perms = [p for p in itertools.permutations(group) if tuple(self.t[j] for j in p) != orig]
            perm = self.rng.choice(perms)
            return self.record(
                kind,
                "reorder",
                s,
                s + size,
                tuple(self.t[j] for j in perm),
                tuple(self.g[j] for j in perm),
                weight=min(size, remaining),
            )
        return None


_REQUIREMENTS = {
    PerturbationKind.token_noise: ("tokens", "a random-token pool"),
    PerturbationKind.pronoun_swap: ("pronouns", "a pronoun list"),
    PerturbationKind.adposition_swap: ("adpositions", "an adposition list"),
    PerturbationKind.connective_swap: ("connectives", "a connective list"),
    PerturbationKind.verb_form: ("verb_forms", "a verb-form table"),
    PerturbationKind.lexical_cohesion: ("tokens", "a random-token pool"),
    PerturbationKind.punctuation: ("punctuation", "a punctuation list"),
    PerturbationKind.mask: ("tokens", "a random-token pool"),
}


def check_resources(plan: PerturbationPlan, lexicon: Lexicon, trie: Optional[InflectionTrie]) -> None:
    lang = plan.language.key if plan.language else "unspecified language"
    for kind in plan.kinds:
        if kind is PerturbationKind.grammar_inflect:
            if trie is None:
                raise MissingResource(kind, lang, "an inflection trie")
            continue
        req = _REQUIREMENTS.get(kind)
        if req and not getattr(lexicon, req[0]):
            raise MissingResource(kind, lang, req[1])


@dataclass(frozen=True)
class Perturbation:
    original: str
    text: str
    log: EditLog

    @property
    def changed(self) -> bool:
        return bool(self.log.edits)


def apply_perturbations(
    text: str,
    plan: PerturbationPlan,
    lexicons: Union[LexiconSet, Lexicon, None] = None,
    trie: Optional[InflectionTrie] = None,
) -> Tuple[str, EditLog]:
    """Perturb ``text`` according to ``plan``.

    The token budget ``B = max(1, round_half_up(rate * N))`` is spent one edit
    at a time, cycling through ``plan.kinds`` in order; a kind with no
    eligible position left drops out of the cycle.  If every kind runs dry
    before the budget is spent the remainder is reported as ``shortfall``.
    """
    if isinstance(lexicons, LexiconSet):
        lex = lexicons.get(plan.language)
    else:
        lex = lexicons or Lexicon()
    check_resources(plan, lex, trie)
    text = nfc(text)
    toks = tokenize(text)
    if not toks:
        raise PerturbationError("text has no tokens")
    tokens = [t.text for t in toks]
    glue = [t.glued for t in toks]
    budget = token_budget(plan.rate, len(tokens))
    eng = _Engine(tokens, glue, random.Random(plan.seed), lex, trie)

    active = list(dict.fromkeys(plan.kinds))
    remaining = budget
    while remaining > 0 and active:
        still = []
        for kind in active:
            if remaining == 0:
                still.append(kind)
                continue
            edit = getattr(eng, kind.value)(remaining)
            if edit is None:
                continue
            remaining -= edit.weight
            still.append(kind)
        active = still

    edits = sorted(eng.edits, key=lambda e: e.start)
    out_t, out_g, placed = _assemble(tokens, glue, edits)
    if not out_t:
        raise PerturbationError("perturbation deleted every token")
    edited = sum(e.weight for e in placed)
    elog = EditLog(tuple(placed), len(tokens), budget, edited, budget - edited, len(out_t))
    if elog.shortfall:
        log.debug("budget shortfall %d of %d", elog.shortfall, budget)
    return (detokenize(out_t, out_g) if placed else text), elog


def perturb(text: str, plan: PerturbationPlan, lexicons=None, trie=None) -> Perturbation:
    out, elog = apply_perturbations(text, plan, lexicons, trie)
    return Perturbation(nfc(text), out, elog)
