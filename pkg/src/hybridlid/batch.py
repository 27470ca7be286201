"""Manifest handling and deterministic parallel generative scoring."""

from __future__ import annotations

import functools
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .ctc import DecodeResult, DecoderConfig, PosteriorMatrix, read_posteriors
from .errors import DataError
from .lid_gen import LanguagePack, LidScores, check_compatible, decode_language, load_packs

RESERVED_LABELS = frozenset({"best"})


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    language: str
    posteriors_path: Path
    reference: str | None = None


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """``utt_id<TAB>language<TAB>posteriors_path[<TAB>reference]``; paths are relative to the manifest."""
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4) or not all(parts[:3]):
            raise DataError(f"{path}: line {lineno} is not utt_id<TAB>language<TAB>posteriors[<TAB>reference]")
        if parts[0] in seen:
            raise DataError(f"{path}: duplicate utterance id {parts[0]!r} at line {lineno}")
        seen.add(parts[0])
        entries.append(ManifestEntry(parts[0], parts[1], base / parts[2], parts[3] if len(parts) == 4 else None))
    if not entries:
        raise DataError(f"{path}: empty manifest")
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path: str | Path) -> None:
    path = Path(path)
    rows = []
    for e in entries:
        p = e.posteriors_path
        rel = os.path.relpath(p, path.parent) if p.is_absolute() else str(p)
        cols = [e.utt_id, e.language, rel] + ([e.reference] if e.reference is not None else [])
        rows.append("\t".join(cols) + "\n")
    atomic_write_text(path, "".join(rows))


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------------------
# scoring


@functools.lru_cache(maxsize=16)
def _load_posteriors(path: str) -> PosteriorMatrix:
    return read_posteriors(path)


def _decode_task(
    packs: Mapping[str, LanguagePack], utt_id: str, post_path: str, lang: str, config: DecoderConfig
) -> DecodeResult:
    try:
        post = _load_posteriors(post_path)
        pack = packs[lang]
        check_compatible(post, {lang: pack})
        return decode_language(post, pack, config)
    except DataError as exc:
        raise DataError(f"utterance {utt_id!r}: {exc}") from None
    except OSError as exc:
        raise DataError(f"utterance {utt_id!r}: cannot read posteriors: {exc}") from None


_WORKER_PACKS: dict[str, LanguagePack] = {}


def _init_worker(pack_root: str | None, packs: Mapping[str, LanguagePack] | None) -> None:
    global _WORKER_PACKS
    _WORKER_PACKS = dict(packs) if packs is not None else load_packs(pack_root)


def _worker_task(utt_id: str, post_path: str, lang: str, config: DecoderConfig) -> DecodeResult:
    return _decode_task(_WORKER_PACKS, utt_id, post_path, lang, config)


def run_parallel_scoring(
    entries: Sequence[ManifestEntry],
    packs: Mapping[str, LanguagePack] | str | Path,
    worker_count: int = 1,
    config: DecoderConfig = DecoderConfig(),
) -> list[tuple[str, LidScores]]:
    """Score every utterance against every pack; results follow manifest order.

    Work is split per (utterance, language). Workers load the packs once, from
    ``packs`` if it is a directory path. Output does not depend on ``worker_count``.
    """
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    pack_root = None
    if isinstance(packs, (str, Path)):
        pack_root = str(packs)
        pack_map = load_packs(pack_root)
    else:
        pack_map = dict(packs)
    if len(pack_map) < 2:
        raise DataError("generative LID needs at least two language packs")
    reserved = sorted(RESERVED_LABELS & set(pack_map))
    if reserved:
        raise DataError(f"language codes {reserved} are reserved")
    langs = sorted(pack_map)
    tasks = [(e.utt_id, str(e.posteriors_path), lang) for e in entries for lang in langs]

    if worker_count == 1 or len(tasks) == 1:
        results = [_decode_task(pack_map, u, p, lang, config) for u, p, lang in tasks]
    else:
        init_args = (pack_root, None) if pack_root is not None else (None, pack_map)
        chunk = max(1, len(tasks) // (worker_count * 8))
        with ProcessPoolExecutor(worker_count, initializer=_init_worker, initargs=init_args) as pool:
            # map preserves submission order, and raises the first failing task's error
            results = list(
                pool.map(
                    _worker_task,
                    [t[0] for t in tasks],
                    [t[1] for t in tasks],
                    [t[2] for t in tasks],
                    [config] * len(tasks),
                    chunksize=chunk,
                )
            )

    out = []
    it = iter(results)
    for e in entries:
        hyps = {lang: next(it) for lang in langs}
        out.append((e.utt_id, LidScores({k: h.total_logscore for k, h in hyps.items()}, hyps)))
    return out
