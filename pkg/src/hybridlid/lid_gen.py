"""Generative language identification: decode shared posteriors with every language pack."""

from __future__ import annotations

import logging
import math
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import TextCorpus, sample_lines
from .ctc import DecodeResult, DecoderConfig, PosteriorMatrix, beam_decode
from .errors import DataError
from .ngram import NgramModel, read_arpa, train_kneser_ney, write_arpa
from .roman import Lexicon, RomanMap, build_lexicon, builtin_roman_map, drop_rate, read_lexicon, write_lexicon
from .subword import WORD_MARKER, SubwordVocab, encode, read_vocab, train_unigram_vocab, write_vocab

logger = logging.getLogger(__name__)

PACK_FILES = ("vocab.tsv", "lexicon.tsv", "lm.arpa", "meta.txt")
LN10 = math.log(10.0)


@dataclass(frozen=True)
class LanguagePack:
    language: str
    vocab: SubwordVocab
    lexicon: Lexicon
    lm: NgramModel
    version: str = "1"

    def __post_init__(self) -> None:
        extra = set(self.lexicon.entries) - set(self.vocab.entries)
        if extra:
            raise DataError(f"pack {self.language!r}: lexicon tokens not in vocab: {sorted(extra)[:5]}")


@dataclass(frozen=True)
class LidScores:
    per_language: Mapping[str, float]
    hypotheses: Mapping[str, DecodeResult]

    def __post_init__(self) -> None:
        if set(self.per_language) != set(self.hypotheses):
            raise ValueError("score and hypothesis maps must share their language keys")


@dataclass(frozen=True)
class LidDistribution:
    probs: Mapping[str, float]

    def __post_init__(self) -> None:
        if not self.probs:
            raise ValueError("empty distribution")
        if any(p < 0 or not math.isfinite(p) for p in self.probs.values()):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(math.fsum(self.probs.values()) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @property
    def languages(self) -> list[str]:
        return sorted(self.probs)


# ---------------------------------------------------------------------------
# pack building and I/O


def build_pack(
    corpus: TextCorpus,
    vocab_size: int = 10_000,
    seed_size: int | None = None,
    order: int = 2,
    max_lines: int = 100_000,
    seed: int = 0,
    rmap: RomanMap | None = None,
    word_marker: str | None = WORD_MARKER,
) -> LanguagePack:
    """Sample lines, train the subword vocab and KN LM, and spell the vocab in uroman."""
    rmap = rmap or builtin_roman_map()
    sample = sample_lines(corpus, max_lines, seed)
    drop_rate(sample.lines, rmap)
    n_chars = len({ch for line in sample.lines for w in line.split() for ch in (word_marker or "") + w})
    target = max(vocab_size, n_chars)
    vocab = train_unigram_vocab(sample, target, seed_size or 2 * target, word_marker=word_marker)
    sentences = [encode(line, vocab) for line in sample.lines]
    lm = train_kneser_ney(sentences, order)
    lexicon = build_lexicon(vocab, rmap, corpus.language)
    return LanguagePack(corpus.language, vocab, lexicon, lm)


def write_pack(pack: LanguagePack, out_dir: str | Path) -> Path:
    """Write ``<out_dir>/<lang>/``; the directory appears atomically."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    final = out_dir / pack.language
    tmp = Path(tempfile.mkdtemp(prefix=f".{pack.language}.", dir=out_dir))
    try:
        write_vocab(pack.vocab, tmp / "vocab.tsv")
        write_lexicon(pack.lexicon, tmp / "lexicon.tsv")
        write_arpa(pack.lm, tmp / "lm.arpa")
        meta = {
            "language": pack.language,
            "version": pack.version,
            "order": str(pack.lm.order),
            "vocab_size": str(len(pack.vocab)),
            "target_size": str(pack.vocab.target_size),
            "word_marker": pack.vocab.word_marker or "",
            "lexicon_size": str(len(pack.lexicon)),
        }
        (tmp / "meta.txt").write_text("".join(f"{k}={v}\n" for k, v in meta.items()), encoding="utf-8")
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def read_meta(path: str | Path) -> dict[str, str]:
    meta = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {lineno} is not key=value")
        k, v = line.split("=", 1)
        meta[k.strip()] = v.strip()
    return meta


def read_pack(pack_dir: str | Path) -> LanguagePack:
    pack_dir = Path(pack_dir)
    for name in PACK_FILES:
        if not (pack_dir / name).is_file():
            raise DataError(f"{pack_dir}: missing {name}")
    meta = read_meta(pack_dir / "meta.txt")
    lang = meta.get("language", pack_dir.name)
    vocab = read_vocab(
        pack_dir / "vocab.tsv",
        target_size=int(meta["target_size"]) if "target_size" in meta else None,
        word_marker=meta.get("word_marker") or None,
    )
    lexicon = read_lexicon(pack_dir / "lexicon.tsv", lang)
    lm = read_arpa(pack_dir / "lm.arpa")
    return LanguagePack(lang, vocab, lexicon, lm, meta.get("version", "1"))


def load_packs(root: str | Path) -> dict[str, LanguagePack]:
    """Every pack directory under ``root``, keyed by language."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: pack root is not a directory")
    packs = {}
    for d in sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith(".")):
        pack = read_pack(d)
        if pack.language in packs:
            raise DataError(f"duplicate language {pack.language!r} in {root}")
        packs[pack.language] = pack
    return packs


# ---------------------------------------------------------------------------
# scoring


def _pack_map(packs: Mapping[str, LanguagePack] | Iterable[LanguagePack]) -> dict[str, LanguagePack]:
    if isinstance(packs, Mapping):
        return dict(packs)
    out: dict[str, LanguagePack] = {}
    for p in packs:
        if p.language in out:
            raise DataError(f"duplicate language {p.language!r}")
        out[p.language] = p
    return out


def check_compatible(post: PosteriorMatrix, packs: Mapping[str, LanguagePack]) -> None:
    symbols = set(post.symbols)
    bad = {lang: sorted(p.lexicon.symbols() - symbols) for lang, p in packs.items()}
    bad = {k: v for k, v in bad.items() if v}
    if bad:
        detail = "; ".join(f"{k}: {v}" for k, v in sorted(bad.items()))
        raise DataError(f"packs incompatible with the posterior inventory ({detail})")


def decode_language(post: PosteriorMatrix, pack: LanguagePack, config: DecoderConfig) -> DecodeResult:
    return beam_decode(post, pack.lexicon, pack.lm, config, pack.vocab.word_marker)


def score_all_languages(
    post: PosteriorMatrix,
    packs: Mapping[str, LanguagePack] | Iterable[LanguagePack],
    config: DecoderConfig = DecoderConfig(),
) -> LidScores:
    """Decode ``post`` once per language; results do not depend on pack order."""
    packs = _pack_map(packs)
    if len(packs) < 2:
        raise DataError("generative LID needs at least two language packs")
    check_compatible(post, packs)
    hyps = {lang: decode_language(post, packs[lang], config) for lang in sorted(packs)}
    return LidScores({k: h.total_logscore for k, h in hyps.items()}, hyps)


def normalize_scores(scores: LidScores | Mapping[str, float]) -> LidDistribution:
    """Softmax over log10 total scores (converted to natural log), max-subtracted.

    If every score is -inf the result is uniform.
    """
    per = scores.per_language if isinstance(scores, LidScores) else scores
    if not per:
        raise ValueError("no scores to normalize")
    langs = sorted(per)
    top = max(per.values())
    if top == -math.inf:
        return LidDistribution({k: 1.0 / len(langs) for k in langs})
    if not math.isfinite(top):
        raise ValueError("scores must not be +inf or nan")
    weights = {k: math.exp((per[k] - top) * LN10) for k in langs}
    z = math.fsum(weights.values())
    return LidDistribution({k: v / z for k, v in weights.items()})


def classify(dist: LidDistribution | Mapping[str, float]) -> str:
    """Argmax language; ties go to the lexicographically smallest code."""
    probs = dist.probs if isinstance(dist, LidDistribution) else dist
    return min(probs, key=lambda k: (-probs[k], k))
