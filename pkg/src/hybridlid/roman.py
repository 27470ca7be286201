"""Table-driven romanization into the decoder symbol inventory, and lexicon building."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError
from .subword import SubwordVocab

logger = logging.getLogger(__name__)

BLANK = "<blank>"
# 26 letters, 10 digits and the apostrophe; with blank that makes 38 decoder symbols.
UROMAN_ALPHABET: tuple[str, ...] = tuple("abcdefghijklmnopqrstuvwxyz0123456789'")
DEFAULT_SYMBOLS: tuple[str, ...] = (BLANK,) + UROMAN_ALPHABET
DROP_WARN_RATE = 0.05


@dataclass(frozen=True)
class RomanMap:
    rules: tuple[tuple[str, str], ...]
    output_alphabet: tuple[str, ...] = UROMAN_ALPHABET
    _table: dict[str, str] = field(init=False, repr=False, compare=False)
    _max_len: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        alphabet = set(self.output_alphabet)
        table = {sym: sym for sym in self.output_alphabet}
        for src, dst in self.rules:
            if not src:
                raise DataError("romanization rule with empty source")
            bad = [ch for ch in dst if ch not in alphabet]
            if bad:
                raise DataError(f"rule {src!r} -> {dst!r} emits symbols outside the alphabet: {bad}")
            if all(ch in alphabet for ch in src) and src != dst:
                # would rewrite already-romanized text and break idempotence
                raise DataError(f"rule {src!r} -> {dst!r} rewrites output-alphabet text")
            table[src] = dst
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_max_len", max(len(k) for k in table))

    def apply(self, text: str) -> tuple[str, Counter]:
        """Longest-match, left-to-right rewrite; returns output and dropped characters."""
        out: list[str] = []
        dropped: Counter = Counter()
        i, n = 0, len(text)
        table, max_len = self._table, self._max_len
        while i < n:
            for k in range(min(max_len, n - i), 0, -1):
                dst = table.get(text[i : i + k])
                if dst is not None:
                    out.append(dst)
                    i += k
                    break
            else:
                dropped[text[i]] += 1
                i += 1
        return "".join(out), dropped


def romanize(text: str, rmap: RomanMap) -> str:
    return rmap.apply(text)[0]


def drop_rate(lines: Iterable[str], rmap: RomanMap, warn_above: float = DROP_WARN_RATE) -> float:
    """Fraction of non-space characters with no rule; logs a warning above ``warn_above``."""
    total = dropped = 0
    for line in lines:
        text = "".join(line.split())
        total += len(text)
        dropped += sum(rmap.apply(text)[1].values())
    rate = dropped / total if total else 0.0
    if rate > warn_above:
        logger.warning("romanization dropped %.1f%% of characters", 100 * rate)
    return rate


def read_roman_map(path: str | Path) -> RomanMap:
    """Parse ``source<TAB>target`` rows. An optional ``#alphabet<TAB>...`` line overrides the inventory."""
    return _parse_map(Path(path).read_text(encoding="utf-8"), str(path))


def _parse_map(text: str, name: str) -> RomanMap:
    rules = []
    alphabet: tuple[str, ...] = UROMAN_ALPHABET
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.startswith("#alphabet\t"):
            alphabet = tuple(line.split("\t", 1)[1].split())
            continue
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{name}: malformed rule at line {lineno}")
        rules.append((parts[0], parts[1]))
    return RomanMap(tuple(rules), alphabet)


def builtin_roman_map(*tables: str) -> RomanMap:
    """The shipped map: Latin diacritic folding plus a small Cyrillic table."""
    names = tables or ("latin", "cyrillic")
    text = "\n".join(
        resources.files("hybridlid.data").joinpath(f"{name}.tsv").read_text(encoding="utf-8")
        for name in names
    )
    return _parse_map(text, "builtin:" + "+".join(names))


def write_roman_map(rmap: RomanMap, path: str | Path) -> None:
    lines = ["#alphabet\t" + " ".join(rmap.output_alphabet)]
    lines += [f"{s}\t{d}" for s, d in rmap.rules]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, tuple[str, ...]]
    language: str
    excluded: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for tok, spelling in self.entries.items():
            if not spelling:
                raise DataError(f"lexicon entry {tok!r} has an empty spelling")

    def __len__(self) -> int:
        return len(self.entries)

    def symbols(self) -> set[str]:
        return {s for sp in self.entries.values() for s in sp}


def build_lexicon(
    vocab: SubwordVocab | Iterable[str], rmap: RomanMap, language: str
) -> Lexicon:
    """Spell every token in uroman symbols.

    Tokens whose romanization is empty are left out and listed in ``excluded``.
    """
    tokens = sorted(vocab.entries if isinstance(vocab, SubwordVocab) else vocab)
    if not tokens:
        raise DataError("cannot build a lexicon from an empty vocabulary")
    entries: dict[str, tuple[str, ...]] = {}
    excluded: list[str] = []
    for tok in tokens:
        spelled = romanize(tok, rmap)
        if spelled:
            entries[tok] = tuple(spelled)
        else:
            excluded.append(tok)
    if not entries:
        raise DataError(f"every token romanizes to the empty string; lexicon for {language!r} would be empty")
    if excluded:
        logger.info("%s: %d tokens have no romanization and were left out", language, len(excluded))
    return Lexicon(entries, language, tuple(excluded))


def write_lexicon(lexicon: Lexicon, path: str | Path) -> None:
    rows = [f"{tok}\t{' '.join(sp)}\n" for tok, sp in sorted(lexicon.entries.items())]
    Path(path).write_text("".join(rows), encoding="utf-8")


def read_lexicon(path: str | Path, language: str, symbols: Sequence[str] | None = None) -> Lexicon:
    allowed = set(symbols) - {BLANK} if symbols is not None else None
    entries = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[1].split():
            raise DataError(f"{path}: malformed lexicon row at line {lineno}")
        spelling = tuple(parts[1].split())
        if allowed is not None and any(s not in allowed for s in spelling):
            raise DataError(f"{path}: line {lineno} uses symbols outside the inventory")
        entries[parts[0]] = spelling
    return Lexicon(entries, language)
