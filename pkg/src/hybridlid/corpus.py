"""Per-language text corpora: loading, normalization and subsampling."""

from __future__ import annotations

import random
import re
import string
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

# Apostrophe is kept: it belongs to the decoder symbol inventory.
DEFAULT_PUNCTUATION = frozenset(
    (set(string.punctuation) - {"'"})
    | set("¡¿«»‘“”„…–—、。，！？،؟।")
)

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class NormalizationConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True
    max_line_chars: int = 2000
    punctuation: frozenset[str] = field(default=DEFAULT_PUNCTUATION)

    def __post_init__(self) -> None:
        if self.max_line_chars < 1:
            raise ValueError("max_line_chars must be >= 1")


@dataclass(frozen=True)
class TextCorpus:
    language: str
    lines: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.language:
            raise ValueError("language code must be non-empty")
        if any(not line.strip() for line in self.lines):
            raise ValueError("corpus lines must be non-empty")

    def __len__(self) -> int:
        return len(self.lines)


def _truncate(line: str, limit: int) -> str:
    if len(line) <= limit:
        return line
    head = line[:limit]
    # cut at the last whitespace inside the window; hard cut if there is none
    for i in range(len(head) - 1, 0, -1):
        if head[i].isspace():
            return head[:i].rstrip()
    return head


def normalize_line(line: str, config: NormalizationConfig = NormalizationConfig()) -> str:
    """Normalize one line. Idempotent for every config."""
    text = unicodedata.normalize("NFC", line)
    if config.lowercase:
        text = unicodedata.normalize("NFC", text.lower())
    if config.strip_punctuation:
        text = "".join(" " if ch in config.punctuation else ch for ch in text)
    if config.collapse_whitespace:
        text = _WS_RE.sub(" ", text).strip()
    else:
        text = text.strip("\r\n")
    return _truncate(text, config.max_line_chars)


def normalize_lines(
    lines, language: str, config: NormalizationConfig = NormalizationConfig()
) -> TextCorpus:
    out = []
    for line in lines:
        norm = normalize_line(line, config)
        if norm.strip():
            out.append(norm)
    return TextCorpus(language, tuple(out))


def load_corpus(
    path: str | Path, language: str, config: NormalizationConfig = NormalizationConfig()
) -> TextCorpus:
    """Read a UTF-8, one-sentence-per-line file and normalize it.

    Raises ``FileNotFoundError`` for a missing file and ``DataError`` naming the
    first line that is not valid UTF-8.
    """
    raw = Path(path).read_bytes()
    lines = []
    for lineno, chunk in enumerate(raw.split(b"\n"), start=1):
        try:
            lines.append(chunk.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: invalid UTF-8 at line {lineno} (byte {exc.start})") from None
    return normalize_lines(lines, language, config)


def sample_lines(corpus: TextCorpus, max_n: int, seed: int) -> TextCorpus:
    """Uniformly sample ``max_n`` lines without replacement.

    A seeded shuffle picks the indices; the sample keeps the original line order.
    """
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if len(corpus) <= max_n:
        return corpus
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    keep = sorted(order[:max_n])
    return TextCorpus(corpus.language, tuple(corpus.lines[i] for i in keep))


def write_corpus(corpus: TextCorpus, path: str | Path) -> None:
    Path(path).write_text("".join(line + "\n" for line in corpus.lines), encoding="utf-8")
