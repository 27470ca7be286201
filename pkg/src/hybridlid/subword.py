"""Unigram-LM subword vocabulary: training by hard EM with pruning, Viterbi segmentation.

Words are segmented independently; pieces never cross whitespace. With a
``word_marker`` (``"▁"`` as in sentence-piece) every word is prefixed by the
marker before segmentation so word boundaries survive detokenization.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import TextCorpus
from .errors import DataError

logger = logging.getLogger(__name__)

WORD_MARKER = "▁"
MAX_PIECE_LEN = 8
PRUNE_FRACTION = 0.2
EM_ITERATIONS = 4


@dataclass(frozen=True)
class SubwordVocab:
    entries: Mapping[str, float]
    target_size: int
    coverage_alphabet: frozenset[str]
    word_marker: str | None = None

    def __post_init__(self) -> None:
        for tok, lp in self.entries.items():
            if not tok:
                raise ValueError("empty token in vocab")
            if not (math.isfinite(lp) and lp <= 0.0):
                raise ValueError(f"bad log-probability {lp!r} for token {tok!r}")
        missing = [c for c in self.coverage_alphabet if c not in self.entries]
        if missing:
            raise ValueError(f"coverage characters missing from vocab: {sorted(missing)}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return token in self.entries

    @property
    def max_token_len(self) -> int:
        return max(len(t) for t in self.entries)


@dataclass(frozen=True)
class Segmentation:
    tokens: tuple[str, ...]
    score: float


def _viterbi(text: str, logp: Mapping[str, float], max_len: int) -> tuple[float, tuple[str, ...]] | None:
    """Best segmentation of ``text``; ties -> fewest tokens -> lexicographic tokens.

    Returns None when no segmentation exists.
    """
    n = len(text)
    neg = -math.inf
    score = [neg] * (n + 1)
    ntok = [0] * (n + 1)
    back = [-1] * (n + 1)
    score[0] = 0.0
    for end in range(1, n + 1):
        for start in range(max(0, end - max_len), end):
            prev = score[start]
            if prev == neg:
                continue
            lp = logp.get(text[start:end])
            if lp is None:
                continue
            cand = prev + lp
            k = ntok[start] + 1
            if back[end] < 0 or cand > score[end] or (cand == score[end] and k < ntok[end]):
                score[end], ntok[end], back[end] = cand, k, start
            elif cand == score[end] and k == ntok[end]:
                # exact tie: fall back to comparing the token sequences
                if _trace(text, back, start) + (text[start:end],) < _trace(text, back, end):
                    back[end] = start
    if back[n] < 0 and n > 0:
        return None
    return score[n], _trace(text, back, n)


def _trace(text: str, back: list[int], end: int) -> tuple[str, ...]:
    toks = []
    while end > 0:
        start = back[end]
        toks.append(text[start:end])
        end = start
    return tuple(reversed(toks))


def segment_viterbi(text: str, vocab: SubwordVocab) -> Segmentation:
    """Maximum log-probability segmentation of ``text`` under ``vocab``."""
    for i, ch in enumerate(text):
        if ch not in vocab.coverage_alphabet and ch not in vocab.entries:
            raise DataError(f"character {ch!r} at offset {i} is not covered by the vocabulary")
    result = _viterbi(text, vocab.entries, vocab.max_token_len)
    if result is None:  # unreachable when every character is a token
        raise DataError(f"text {text!r} cannot be segmented")
    return Segmentation(result[1], result[0])


def split_words(line: str, word_marker: str | None) -> list[str]:
    words = line.split()
    if word_marker:
        return [word_marker + w for w in words]
    return words


def encode(line: str, vocab: SubwordVocab) -> list[str]:
    """Tokenize a whole line word by word."""
    tokens: list[str] = []
    for word in split_words(line, vocab.word_marker):
        tokens.extend(segment_viterbi(word, vocab).tokens)
    return tokens


def detokenize(tokens: Iterable[str], word_marker: str | None = WORD_MARKER) -> str:
    text = "".join(tokens)
    if word_marker:
        text = text.replace(word_marker, " ").strip()
    return text


def _word_counts(corpus: TextCorpus, word_marker: str | None) -> Counter:
    counts: Counter = Counter()
    for line in corpus.lines:
        counts.update(split_words(line, word_marker))
    return counts


def _seed_pieces(words: Counter, seed_size: int, alphabet: set[str]) -> dict[str, int]:
    freq: Counter = Counter()
    for word, c in words.items():
        n = len(word)
        for i in range(n):
            for j in range(i + 2, min(n, i + MAX_PIECE_LEN) + 1):
                freq[word[i:j]] += c
    chars: Counter = Counter()
    for word, c in words.items():
        for ch in word:
            chars[ch] += c
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    seed = dict(ranked[: max(0, seed_size - len(alphabet))])
    seed.update(chars)
    return seed


def _corpus_loglik(words: Counter, logp: Mapping[str, float], max_len: int):
    """Total Viterbi log-likelihood and per-token Viterbi counts."""
    total = 0.0
    counts: Counter = Counter()
    for word, c in words.items():
        res = _viterbi(word, logp, max_len)
        if res is None:
            raise DataError(f"word {word!r} became unsegmentable during training")
        score, toks = res
        total += c * score
        for t in toks:
            counts[t] += c
    return total, counts


def _mle(pieces: Iterable[str], counts: Counter) -> dict[str, float]:
    # zero-count pieces are dropped from the active set; single chars are floored at the end
    total = sum(counts[p] for p in pieces)
    return {p: math.log(counts[p] / total) for p in pieces if counts[p] > 0}


def train_unigram_vocab(
    corpus: TextCorpus,
    target_size: int,
    seed_size: int,
    word_marker: str | None = None,
    em_iterations: int = EM_ITERATIONS,
    trace: list | None = None,
) -> SubwordVocab:
    """Train a unigram-LM vocabulary of about ``target_size`` pieces.

    Seeds with the ``seed_size`` most frequent substrings (length <= 8) plus every
    character, then alternates hard (Viterbi) EM with pruning of the lowest-loss
    20% of multi-character pieces. If ``trace`` is given, ``(round, iteration,
    loglik)`` tuples are appended to it.
    """
    if len(corpus) == 0:
        raise DataError("cannot train a vocabulary on an empty corpus")
    words = _word_counts(corpus, word_marker)
    alphabet = {ch for w in words for ch in w}
    if target_size < len(alphabet):
        raise DataError(
            f"target_size {target_size} is smaller than the character inventory ({len(alphabet)})"
        )
    if seed_size < target_size:
        raise ValueError("seed_size must be >= target_size")

    seed = _seed_pieces(words, seed_size, alphabet)
    total = sum(seed.values())
    logp = {p: math.log(c / total) for p, c in seed.items()}
    pieces = set(logp)

    round_no = 0
    while True:
        counts: Counter = Counter()
        for it in range(em_iterations):
            ll, counts = _corpus_loglik(words, logp, MAX_PIECE_LEN)
            if trace is not None:
                trace.append((round_no, it, ll))
            logp = _mle(pieces, counts)
        prunable = [p for p in pieces if len(p) > 1]
        excess = len(pieces) - target_size
        if excess <= 0 or not prunable:
            break
        n_remove = min(excess, max(1, math.ceil(PRUNE_FRACTION * len(prunable))))
        losses = _prune_losses(prunable, counts, logp)
        doomed = sorted(prunable, key=lambda p: (losses[p], -len(p), p))[:n_remove]
        for p in doomed:
            pieces.discard(p)
            logp.pop(p, None)
        logp = _restore_chars(logp, alphabet)
        round_no += 1

    # final re-estimate on the surviving set
    _, counts = _corpus_loglik(words, logp, MAX_PIECE_LEN)
    logp = _mle(pieces, counts)
    floor = min(logp.values()) + math.log(0.1)
    entries = {}
    for p in sorted(pieces):
        if p in logp:
            entries[p] = logp[p]
        elif len(p) == 1:
            entries[p] = floor
    return SubwordVocab(entries, target_size, frozenset(alphabet), word_marker)


def _restore_chars(logp: dict[str, float], alphabet: set[str]) -> dict[str, float]:
    """Give dropped single characters a small floor mass and renormalize."""
    missing = [ch for ch in alphabet if ch not in logp]
    if not missing:
        return logp
    floor = min(logp.values()) + math.log(0.1)
    merged = dict(logp)
    merged.update((ch, floor) for ch in missing)
    norm = math.log(math.fsum(math.exp(v) for v in merged.values()))
    return {k: v - norm for k, v in merged.items()}


def _prune_losses(prunable, counts: Counter, logp: Mapping[str, float]) -> dict[str, float]:
    """Likelihood lost when a piece is replaced by its best split into other pieces."""
    losses = {}
    for p in prunable:
        c = counts.get(p, 0)
        if c == 0 or p not in logp:
            losses[p] = 0.0
            continue
        alt = _viterbi_excluding(p, logp)
        losses[p] = math.inf if alt is None else c * (logp[p] - alt)
    return losses


def _viterbi_excluding(piece: str, logp: Mapping[str, float]) -> float | None:
    n = len(piece)
    best = [-math.inf] * (n + 1)
    best[0] = 0.0
    for end in range(1, n + 1):
        for start in range(max(0, end - MAX_PIECE_LEN), end):
            if start == 0 and end == n:
                continue
            lp = logp.get(piece[start:end])
            if lp is not None and best[start] > -math.inf:
                best[end] = max(best[end], best[start] + lp)
    return None if best[n] == -math.inf else best[n]


def write_vocab(vocab: SubwordVocab, path: str | Path) -> None:
    """Write ``token<TAB>logprob`` rows sorted by token (repr floats round-trip exactly)."""
    rows = [f"{tok}\t{vocab.entries[tok]!r}\n" for tok in sorted(vocab.entries)]
    Path(path).write_text("".join(rows), encoding="utf-8")


def read_vocab(
    path: str | Path, target_size: int | None = None, word_marker: str | None = None
) -> SubwordVocab:
    entries = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        try:
            tok, lp = line.split("\t")
            entries[tok] = float(lp)
        except ValueError:
            raise DataError(f"{path}: malformed vocab row at line {lineno}") from None
    alphabet = frozenset(t for t in entries if len(t) == 1)
    return SubwordVocab(entries, target_size or len(entries), alphabet, word_marker)
