"""Toy languages and synthetic CTC posteriors standing in for the acoustic front-end."""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import TextCorpus
from .ctc import PosteriorMatrix
from .errors import DataError
from .roman import BLANK, DEFAULT_SYMBOLS

START = "^"  # context padding for the first two characters of a line


@dataclass(frozen=True)
class ToyLanguage:
    """Order-2 character Markov source.

    ``transitions`` maps a two-character context to (successors, probabilities);
    contexts may contain the ``^`` start padding.
    """

    code: str
    alphabet: tuple[str, ...]
    transitions: Mapping[tuple[str, str], tuple[tuple[str, ...], tuple[float, ...]]]
    seed: int

    def __post_init__(self) -> None:
        if not self.alphabet:
            raise ValueError("toy language needs a non-empty alphabet")
        for ctx, (succ, probs) in self.transitions.items():
            if abs(sum(probs) - 1.0) > 1e-9 or len(succ) != len(probs):
                raise ValueError(f"transition row {ctx} is not a distribution")


def make_toy_language(
    code: str,
    seed: int,
    alphabet_size: int = 12,
    successors: int = 3,
    alphabet: Sequence[str] | None = None,
) -> ToyLanguage:
    """Random sparse order-2 source over a random subset of the Latin letters."""
    rng = np.random.default_rng(seed)
    letters = list(string.ascii_lowercase)
    if alphabet is None:
        alphabet = sorted(rng.choice(letters, size=alphabet_size, replace=False).tolist())
    alphabet = tuple(alphabet)
    k = min(successors, len(alphabet))
    contexts = [(a, b) for a in (START, *alphabet) for b in (START, *alphabet) if not (a != START and b == START)]
    transitions = {}
    for ctx in contexts:
        succ = rng.choice(len(alphabet), size=k, replace=False)
        probs = rng.dirichlet(np.ones(k))
        probs = probs / probs.sum()
        order = np.argsort(succ)
        transitions[ctx] = (
            tuple(alphabet[i] for i in succ[order]),
            tuple(float(p) for p in probs[order]),
        )
    # make every row sum to exactly 1 in float arithmetic
    for ctx, (succ, probs) in transitions.items():
        transitions[ctx] = (succ, probs[:-1] + (1.0 - sum(probs[:-1]),))
    return ToyLanguage(code, alphabet, transitions, seed)


def sample_text(lang: ToyLanguage, length: int, rng: np.random.Generator) -> str:
    ctx = (START, START)
    out = []
    for _ in range(length):
        succ, probs = lang.transitions[ctx]
        ch = succ[int(rng.choice(len(succ), p=probs))]
        out.append(ch)
        ctx = (ctx[1], ch)
    return "".join(out)


def gen_toy_corpus(lang: ToyLanguage, n_lines: int, line_len: int, seed: int) -> TextCorpus:
    if n_lines < 1 or line_len < 1:
        raise ValueError("n_lines and line_len must be >= 1")
    rng = np.random.default_rng(seed)
    return TextCorpus(lang.code, tuple(sample_text(lang, line_len, rng) for _ in range(n_lines)))


def synth_posteriors(
    text: str,
    noise_eps: float,
    blank_rate: float,
    frames_per_char: int,
    seed: int,
    symbols: Sequence[str] = DEFAULT_SYMBOLS,
    frame_rate: float = 50.0,
) -> PosteriorMatrix:
    """Posteriors that put ``1 - noise_eps`` on the intended symbol of every frame.

    A blank-dominated frame separates equal adjacent characters, and follows any
    character with probability ``blank_rate``.
    """
    if not 0.0 <= noise_eps < 1.0 or not 0.0 <= blank_rate < 1.0:
        raise ValueError("noise_eps and blank_rate must lie in [0, 1)")
    if frames_per_char < 1:
        raise ValueError("frames_per_char must be >= 1")
    symbols = tuple(symbols)
    if symbols[0] != BLANK:
        raise DataError(f"first symbol must be {BLANK}")
    index = {s: i for i, s in enumerate(symbols)}
    for pos, ch in enumerate(text):
        if ch not in index or ch == BLANK:
            raise DataError(f"character {ch!r} at offset {pos} is not in the symbol inventory")
    rng = np.random.default_rng(seed)

    targets: list[int] = []
    prev = None
    for ch in text:
        if ch == prev:
            targets.append(0)
        targets.extend([index[ch]] * frames_per_char)
        if blank_rate > 0 and rng.random() < blank_rate:
            targets.append(0)
        prev = ch
    if not targets:
        targets = [0]

    s = len(symbols)
    frames = np.full((len(targets), s), noise_eps / (s - 1))
    frames[np.arange(len(targets)), targets] = 1.0 - noise_eps
    return PosteriorMatrix(frames, symbols, frame_rate)


def bigram_set(lines: Sequence[str]) -> set[str]:
    return {line[i : i + 2] for line in lines for i in range(len(line) - 1)}
