"""CTC posteriors, exact CTC likelihoods and lexicon-constrained beam decoding.

Decoder scores are log10. The acoustic part of a hypothesis is the best single
alignment (Viterbi) of its spelling; the LM is applied only when a token is
completed, plus ``</s>`` at the end of the utterance.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, InvariantError
from .ngram import EOS, NgramModel
from .roman import BLANK, Lexicon
from .subword import WORD_MARKER, detokenize

logger = logging.getLogger(__name__)

MAGIC = "CTCPOST1"
ROW_TOL = 1e-5
ROW_REJECT = 1e-3


@dataclass(frozen=True, eq=False)
class PosteriorMatrix:
    frames: np.ndarray
    symbols: tuple[str, ...]
    frame_rate: float = 50.0

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise DataError("posterior matrix must be T x S with T >= 1")
        if frames.shape[1] != len(self.symbols):
            raise DataError(f"matrix has {frames.shape[1]} columns but {len(self.symbols)} symbols")
        if not self.symbols or self.symbols[0] != BLANK:
            raise DataError(f"first symbol must be {BLANK}")
        if len(set(self.symbols)) != len(self.symbols):
            raise DataError("duplicate symbols")
        if np.any(~np.isfinite(frames)) or np.any(frames < 0) or np.any(frames > 1):
            raise DataError("posteriors must lie in [0, 1]")
        dev = np.abs(frames.sum(axis=1) - 1.0)
        if np.any(dev > ROW_TOL):
            raise DataError(f"row {int(np.argmax(dev > ROW_TOL))} does not sum to 1")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def symbol_ids(self, labels: Sequence[str]) -> list[int]:
        index = {s: i for i, s in enumerate(self.symbols)}
        try:
            return [index[s] for s in labels]
        except KeyError as exc:
            raise DataError(f"symbol {exc.args[0]!r} is not in the posterior inventory") from None


def read_posteriors(path: str | Path) -> PosteriorMatrix:
    """Load a CTCPOST1 file.

    Rows off by more than 1e-3 are rejected; rows off by more than 1e-5 are
    renormalized with a warning.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        raise DataError(f"{path}: truncated CTCPOST1 file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != MAGIC:
        raise DataError(f"{path}: bad header {lines[0]!r}")
    try:
        t, s, rate = int(head[1]), int(head[2]), float(head[3])
    except ValueError:
        raise DataError(f"{path}: bad header {lines[0]!r}") from None
    symbols = tuple(lines[1].split())
    if len(symbols) != s:
        raise DataError(f"{path}: header declares S={s} but {len(symbols)} symbols are listed")
    if not symbols or symbols[0] != BLANK:
        raise DataError(f"{path}: first symbol must be {BLANK}")
    rows = [ln for ln in lines[2:] if ln.strip()]
    if len(rows) != t:
        raise DataError(f"{path}: header declares T={t} but {len(rows)} rows follow")
    data = np.empty((t, s))
    for i, row in enumerate(rows):
        vals = row.split()
        if len(vals) != s:
            raise DataError(f"{path}: row {i} has {len(vals)} values, expected {s}")
        try:
            data[i] = [float(v) for v in vals]
        except ValueError:
            raise DataError(f"{path}: row {i} has a non-numeric value") from None
    if np.any(~np.isfinite(data)) or np.any(data < 0):
        raise DataError(f"{path}: negative or non-finite probability")
    sums = data.sum(axis=1)
    for i, total in enumerate(sums):
        dev = abs(total - 1.0)
        if dev > ROW_REJECT:
            raise DataError(f"{path}: row {i} sums to {total:.6g}")
        if dev > ROW_TOL:
            logger.warning("%s: row %d sums to %.8f; renormalizing", path, i, total)
            data[i] /= total
    return PosteriorMatrix(data, symbols, rate)


def write_posteriors(post: PosteriorMatrix, path: str | Path) -> None:
    t, s = post.frames.shape
    lines = [f"{MAGIC} {t} {s} {post.frame_rate!r}", " ".join(post.symbols)]
    lines += [" ".join(repr(float(v)) for v in row) for row in post.frames]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# exact CTC scores


def _min_frames(labels: Sequence[int]) -> int:
    return len(labels) + sum(1 for a, b in zip(labels, labels[1:]) if a == b)


def _ctc_lattice(post: PosteriorMatrix, labels: Sequence[int], combine) -> float:
    blank = 0
    if any(lab == blank for lab in labels):
        raise ValueError("labels must not contain the blank")
    if _min_frames(labels) > post.num_frames:
        raise DataError(f"{len(labels)} labels cannot be aligned to {post.num_frames} frames")
    with np.errstate(divide="ignore"):
        logp = np.log(post.frames)
    ext = [blank]
    for lab in labels:
        ext += [lab, blank]
    n = len(ext)
    neg = -math.inf
    alpha = [neg] * n
    alpha[0] = logp[0, blank]
    if n > 1:
        alpha[1] = logp[0, ext[1]]
    for t in range(1, post.num_frames):
        prev = alpha
        alpha = [neg] * n
        for s in range(n):
            cands = [prev[s]]
            if s >= 1:
                cands.append(prev[s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                cands.append(prev[s - 2])
            best = combine(cands)
            alpha[s] = best + logp[t, ext[s]] if best > neg else neg
    tail = [alpha[-1]] + ([alpha[-2]] if n > 1 else [])
    return combine(tail)


def _logsumexp(vals: list[float]) -> float:
    m = max(vals)
    if m == -math.inf:
        return m
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


def ctc_forward_logprob(post: PosteriorMatrix, labels: Sequence[int]) -> float:
    """Natural-log probability of ``labels`` summed over all CTC alignments."""
    return _ctc_lattice(post, labels, _logsumexp)


def ctc_viterbi_logprob(post: PosteriorMatrix, labels: Sequence[int]) -> float:
    """Natural-log probability of the single best alignment of ``labels``."""
    return _ctc_lattice(post, labels, max)


# ---------------------------------------------------------------------------
# beam decoding


@dataclass(frozen=True)
class DecoderConfig:
    beam_width: int = 64
    lm_weight: float = 1.0
    word_insertion_bonus: float = 0.0
    blank_bias: float = 0.0

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.lm_weight < 0:
            raise ValueError("lm_weight must be >= 0")


@dataclass(frozen=True)
class DecodeResult:
    tokens: tuple[str, ...]
    text: str
    acoustic_logscore: float
    lm_logscore: float
    total_logscore: float


class _Trie:
    def __init__(self, lexicon: Lexicon, symbol_ids: dict[str, int]):
        self.children: list[dict[int, int]] = [{}]
        tokens: list[list[str]] = [[]]
        for tok, spelling in sorted(lexicon.entries.items()):
            node = 0
            for sym in spelling:
                sid = symbol_ids[sym]
                nxt = self.children[node].get(sid)
                if nxt is None:
                    nxt = len(self.children)
                    self.children[node][sid] = nxt
                    self.children.append({})
                    tokens.append([])
                node = nxt
            tokens[node].append(tok)
        self.tokens: list[tuple[str, ...]] = [tuple(sorted(t)) for t in tokens]


def _rank(item) -> tuple:
    key, (score, _ac, _lm, ntok, toks) = item
    return (-score, ntok, toks, key)


def beam_decode(
    post: PosteriorMatrix,
    lexicon: Lexicon,
    lm: NgramModel,
    config: DecoderConfig = DecoderConfig(),
    word_marker: str | None = WORD_MARKER,
) -> DecodeResult:
    """Token-passing beam search over a lexicon trie with boundary-only LM fusion."""
    index = {s: i for i, s in enumerate(post.symbols)}
    missing = lexicon.symbols() - set(index)
    if missing:
        raise DataError(f"lexicon {lexicon.language!r} uses symbols missing from posteriors: {sorted(missing)}")
    trie = _Trie(lexicon, index)
    children, node_tokens = trie.children, trie.tokens
    root_children = sorted(children[0].items())

    with np.errstate(divide="ignore"):
        logp = np.log10(post.frames)
    if config.blank_bias:
        logp[:, 0] += config.blank_bias / math.log(10)
    frames = logp.tolist()

    w, bonus, beam = config.lm_weight, config.word_insertion_bonus, config.beam_width
    lm_cache: dict[tuple, float] = {}

    def lm_step(state, tok):
        key = (state, tok)
        val = lm_cache.get(key)
        if val is None:
            val = lm_cache[key] = lm.logprob(state, tok)
        return val

    neg = -math.inf
    # key: (trie node, in blank, last symbol, lm state)
    # value: (score, acoustic, lm, n tokens, tokens)
    hyps = {(0, True, -1, lm.initial_state()): (0.0, 0.0, 0.0, 0, ())}

    for row in frames:
        nxt: dict = {}
        thr = neg
        check_at = 2 * beam
        lp_blank = row[0]

        def push(key, val):
            nonlocal thr, check_at
            if val[0] < thr or val[0] == neg:
                return
            old = nxt.get(key)
            if old is None:
                nxt[key] = val
                if len(nxt) >= check_at:
                    thr = heapq.nlargest(beam, (v[0] for v in nxt.values()))[-1]
                    check_at = len(nxt) + beam
            elif _better(val, old):
                nxt[key] = val

        for (node, in_blank, last, state), (score, ac, lmv, ntok, toks) in hyps.items():
            if lp_blank > neg:
                push((node, True, last, state), (score + lp_blank, ac + lp_blank, lmv, ntok, toks))
            if not in_blank:
                lp = row[last]
                if lp > neg:
                    push((node, False, last, state), (score + lp, ac + lp, lmv, ntok, toks))
            for sym, child in children[node].items():
                if sym == last and not in_blank:
                    continue
                lp = row[sym]
                if lp > neg:
                    push((child, False, sym, state), (score + lp, ac + lp, lmv, ntok, toks))
            for tok in node_tokens[node]:
                dlm = lm_step(state, tok)
                base = score + w * dlm + bonus
                new_state = lm.advance(state, tok)
                new_toks = toks + (tok,)
                for sym, child in root_children:
                    if sym == last and not in_blank:
                        continue
                    lp = row[sym]
                    if lp > neg:
                        push(
                            (child, False, sym, new_state),
                            (base + lp, ac + lp, lmv + dlm, ntok + 1, new_toks),
                        )
        if len(nxt) > beam:
            nxt = dict(sorted(nxt.items(), key=_rank)[:beam])
        hyps = nxt

    # the all-blank path is always a candidate, even if pruned from the beam
    blank_ac = math.fsum(row[0] for row in frames)
    eos0 = lm.logprob(lm.initial_state(), EOS)
    finals = [((), blank_ac, eos0)]
    for (node, _in_blank, _last, state), (_score, ac, lmv, _ntok, toks) in hyps.items():
        if node == 0:
            finals.append((toks, ac, lmv + lm.logprob(state, EOS)))
        for tok in node_tokens[node]:
            st = lm.advance(state, tok)
            finals.append((toks + (tok,), ac, lmv + lm_step(state, tok) + lm.logprob(st, EOS)))

    best = None
    for toks, ac, lmv in finals:
        cand = (ac + w * lmv + bonus * len(toks), ac, lmv, len(toks), toks)
        if best is None or _better(cand, best):
            best = cand
    if best is None:
        raise InvariantError("beam collapsed with no surviving hypothesis")
    total, ac, lmv, _, toks = best
    return DecodeResult(toks, detokenize(toks, word_marker), ac, lmv, total)


def _better(a, b) -> bool:
    """Order on (score, acoustic, lm, n tokens, tokens): score, then fewer tokens, then lexicographic."""
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[3] != b[3]:
        return a[3] < b[3]
    return a[4] < b[4]
