"""Interpolated Kneser-Ney n-gram models over subword tokens, with ARPA I/O.

Probabilities are stored in log10. Each stored entry ``probs[(h, w)]`` holds the
fully interpolated ``log10 p(w | h)``; ``backoffs[h]`` holds the log10
interpolation weight of the lower order, so standard ARPA back-off lookup
reproduces the interpolated model exactly.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
# ARPA convention for the never-predicted <s> unigram and for missing <unk>
ARPA_NEVER = -99.0
FALLBACK_DISCOUNT = 0.5

History = tuple[str, ...]


@dataclass(frozen=True)
class NgramModel:
    order: int
    probs: Mapping[tuple[History, str], float]
    backoffs: Mapping[History, float]
    vocab: frozenset[str]
    discounts: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("order must be >= 1")

    @property
    def successors(self) -> list[str]:
        """Every token the model can predict (the vocabulary minus ``<s>``)."""
        return sorted(self.vocab - {BOS})

    def _map(self, token: str) -> str:
        return token if token in self.vocab else UNK

    def logprob(self, history: Sequence[str], token: str) -> float:
        """log10 p(token | history), resolving unseen n-grams through back-off."""
        h = tuple(self._map(t) for t in history[-(self.order - 1) :]) if self.order > 1 else ()
        w = self._map(token)
        acc = 0.0
        probs, backoffs = self.probs, self.backoffs
        while True:
            lp = probs.get((h, w))
            if lp is not None:
                return acc + lp
            if not h:
                return acc + ARPA_NEVER
            acc += backoffs.get(h, 0.0)
            h = h[1:]

    def initial_state(self) -> History:
        return (BOS,) if self.order > 1 else ()

    def advance(self, state: History, token: str) -> History:
        if self.order == 1:
            return ()
        return (state + (self._map(token),))[-(self.order - 1) :]

    def histories(self) -> list[History]:
        """Every stored history (stored n-grams of order below the model order, plus the empty one)."""
        hs = {()}
        for h, w in self.probs:
            if len(h) + 1 < self.order:
                hs.add(h + (w,))
        hs.update(self.backoffs)
        return sorted(hs, key=lambda x: (len(x), x))


def _discount(coc: Counter, n: int) -> float:
    n1, n2 = coc[1], coc[2]
    d = n1 / (n1 + 2 * n2) if n1 + 2 * n2 > 0 else 0.0
    if not 0.0 < d <= 1.0:
        logger.warning(
            "degenerate counts-of-counts at order %d (n1=%d, n2=%d); using discount %.1f",
            n, n1, n2, FALLBACK_DISCOUNT,
        )
        return FALLBACK_DISCOUNT
    return d


def _raw_counts(sentences: Iterable[Sequence[str]], order: int) -> list[Counter]:
    counts = [Counter() for _ in range(order + 1)]
    for sent in sentences:
        padded = [BOS, *sent, EOS]
        for i in range(1, len(padded)):
            for n in range(1, order + 1):
                if i - n + 1 < 0:
                    break
                counts[n][tuple(padded[i - n + 1 : i + 1])] += 1
    return counts


def train_kneser_ney(sentences: Iterable[Sequence[str]], order: int) -> NgramModel:
    """Train an interpolated Kneser-Ney model with one discount per order.

    The highest order uses raw counts; lower orders use continuation counts,
    except n-grams starting with ``<s>``, which keep raw counts. The unigram
    level interpolates with the uniform distribution over the vocabulary, which
    is the only mass ``<unk>`` receives.
    """
    if not 1 <= order <= 4:
        raise ValueError("order must be in [1, 4]")
    sentences = [list(s) for s in sentences]
    if not any(sentences):
        raise DataError("need at least one non-empty sentence")
    for s in sentences:
        if BOS in s or EOS in s:
            raise DataError("sentences must not contain boundary markers")

    raw = _raw_counts(sentences, order)
    adjusted: list[Counter] = [Counter() for _ in range(order + 1)]
    adjusted[order] = raw[order]
    for n in range(order - 1, 0, -1):
        left_ext: Counter = Counter()
        for g in raw[n + 1]:
            left_ext[g[1:]] += 1
        for g, c in raw[n].items():
            adjusted[n][g] = c if g[0] == BOS else left_ext[g]
    adjusted[1].pop((BOS,), None)

    vocab = frozenset({BOS, EOS, UNK} | {g[0] for g in raw[1]})
    n_successors = len(vocab) - 1

    discounts = []
    for n in range(1, order + 1):
        coc = Counter(adjusted[n].values())
        discounts.append(_discount(coc, n))

    probs: dict[tuple[History, str], float] = {}
    backoffs: dict[History, float] = {}
    lin: dict[tuple[History, str], float] = {}  # linear-domain interpolated probabilities

    # unigrams
    d1 = discounts[0]
    total1 = sum(adjusted[1].values())
    gamma0 = d1 * len(adjusted[1]) / total1
    uniform = gamma0 / n_successors
    for w in sorted(vocab - {BOS}):
        a = adjusted[1].get((w,), 0)
        lin[((), w)] = (a - d1) / total1 + uniform if a > 0 else uniform

    def lower(h: History, w: str) -> float:
        # interpolated lower-order probability, resolved through stored back-offs
        acc = 1.0
        while (h, w) not in lin:
            acc *= backoff_lin.get(h, 1.0)
            h = h[1:]
        return acc * lin[(h, w)]

    backoff_lin: dict[History, float] = {}
    for n in range(2, order + 1):
        d = discounts[n - 1]
        by_hist: dict[History, list[tuple[str, int]]] = defaultdict(list)
        for g, a in adjusted[n].items():
            by_hist[g[:-1]].append((g[-1], a))
        for h in sorted(by_hist):
            succ = by_hist[h]
            denom = sum(a for _, a in succ)
            gamma = d * len(succ) / denom
            backoff_lin[h] = gamma
            for w, a in sorted(succ):
                lin[(h, w)] = (a - d) / denom + gamma * lower(h[1:], w)

    for key, p in lin.items():
        probs[key] = math.log10(p)
    for h, g in backoff_lin.items():
        backoffs[h] = math.log10(g)
    return NgramModel(order, probs, backoffs, vocab, tuple(discounts))


def score_sequence(model: NgramModel, tokens: Sequence[str]) -> float:
    """log10 probability of ``<s> tokens </s>``."""
    state = model.initial_state()
    total = 0.0
    for tok in [*tokens, EOS]:
        total += model.logprob(state, tok)
        state = model.advance(state, tok)
    return total


def successor_mass(model: NgramModel, history: History) -> float:
    """Sum over the whole vocabulary of p(w | history); 1 for a normalized model."""
    return math.fsum(10.0 ** model.logprob(history, w) for w in model.successors)


# ---------------------------------------------------------------------------
# ARPA


def write_arpa(model: NgramModel, path: str | Path) -> None:
    by_order: dict[int, list[tuple[History, str]]] = defaultdict(list)
    for h, w in model.probs:
        by_order[len(h) + 1].append((h, w))
    unigram_bos = BOS in model.vocab and ((), BOS) not in model.probs
    if unigram_bos:
        by_order[1].append(((), BOS))
    lines = ["\\data\\"]
    for n in range(1, model.order + 1):
        lines.append(f"ngram {n}={len(by_order[n])}")
    for n in range(1, model.order + 1):
        lines.append("")
        lines.append(f"\\{n}-grams:")
        for h, w in sorted(by_order[n], key=lambda hw: (hw[0] + (hw[1],))):
            gram = h + (w,)
            lp = model.probs.get((h, w), ARPA_NEVER)
            row = f"{lp!r}\t{' '.join(gram)}"
            if gram in model.backoffs:
                row += f"\t{model.backoffs[gram]!r}"
            lines.append(row)
    lines += ["", "\\end\\", ""]
    Path(path).write_text("\n".join(lines), encoding="utf-8")


_COUNT_RE = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION_RE = re.compile(r"^\\(\d+)-grams:$")


def read_arpa(path: str | Path) -> NgramModel:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines()]
    i = 0
    while i < len(lines) and lines[i] != "\\data\\":
        i += 1
    if i == len(lines):
        raise DataError(f"{path}: missing \\data\\ header")
    i += 1
    declared: dict[int, int] = {}
    while i < len(lines) and lines[i]:
        m = _COUNT_RE.match(lines[i])
        if not m:
            raise DataError(f"{path}: malformed \\data\\ line {lines[i]!r}")
        declared[int(m.group(1))] = int(m.group(2))
        i += 1
    if not declared or sorted(declared) != list(range(1, max(declared) + 1)):
        raise DataError(f"{path}: \\data\\ section must declare orders 1..N")
    order = max(declared)

    probs: dict[tuple[History, str], float] = {}
    backoffs: dict[History, float] = {}
    vocab: set[str] = set()
    seen: Counter = Counter()
    current = None
    ended = False
    for ln in lines[i:]:
        if not ln:
            continue
        if ln == "\\end\\":
            ended = True
            break
        m = _SECTION_RE.match(ln)
        if m:
            current = int(m.group(1))
            if current not in declared:
                raise DataError(f"{path}: section \\{current}-grams: not declared in \\data\\")
            continue
        if ln.startswith("\\"):
            raise DataError(f"{path}: unknown section header {ln!r}")
        if current is None:
            raise DataError(f"{path}: n-gram entry outside any section")
        parts = ln.split()
        if len(parts) not in (current + 1, current + 2):
            raise DataError(f"{path}: malformed entry in \\{current}-grams: {ln!r}")
        lp = float(parts[0])
        gram = tuple(parts[1 : current + 1])
        seen[current] += 1
        if current == 1:
            vocab.add(gram[0])
        if not (current == 1 and gram[0] == BOS and lp <= ARPA_NEVER):
            probs[(gram[:-1], gram[-1])] = lp
        if len(parts) == current + 2:
            backoffs[gram] = float(parts[-1])
    if not ended:
        raise DataError(f"{path}: missing \\end\\ marker")
    for n, cnt in declared.items():
        if seen[n] != cnt:
            raise DataError(
                f"{path}: section \\{n}-grams: has {seen[n]} entries but \\data\\ declares ngram {n}={cnt}"
            )
    vocab |= {BOS, EOS, UNK}
    return NgramModel(order, probs, backoffs, frozenset(vocab))
