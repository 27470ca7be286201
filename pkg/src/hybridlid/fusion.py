"""Interpolation of the embedding and generative LID distributions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError
from .lid_gen import LidDistribution, classify

DEFAULT_WEIGHTS = tuple(i / 10 for i in range(11))
DEFAULT_TEMPERATURES = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class FusionConfig:
    weight: float = 0.5  # mass on the embedding model
    temp_emb: float = 1.0
    temp_gen: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"fusion weight {self.weight} outside [0, 1]")
        if not (self.temp_emb > 0 and self.temp_gen > 0):
            raise ValueError("fusion temperatures must be positive")


def apply_temperature(dist: LidDistribution, temp: float) -> dict[str, float]:
    """Raise every probability to ``1/temp`` and renormalize (log domain, max-subtracted)."""
    if temp == 1.0:
        return dict(dist.probs)
    logs = {k: (math.log(p) / temp if p > 0 else -math.inf) for k, p in dist.probs.items()}
    top = max(logs.values())
    w = {k: math.exp(v - top) for k, v in logs.items()}
    z = math.fsum(w.values())
    return {k: v / z for k, v in w.items()}


def fuse(p_emb: LidDistribution, p_gen: LidDistribution, config: FusionConfig = FusionConfig()) -> LidDistribution:
    """Temperature-scale each source, then mix with ``weight`` on the embedding model."""
    if set(p_emb.probs) != set(p_gen.probs):
        only_e = sorted(set(p_emb.probs) - set(p_gen.probs))
        only_g = sorted(set(p_gen.probs) - set(p_emb.probs))
        raise DataError(f"language sets differ (embedding only: {only_e}; generative only: {only_g})")
    e = apply_temperature(p_emb, config.temp_emb)
    g = apply_temperature(p_gen, config.temp_gen)
    w = config.weight
    mixed = {k: w * e[k] + (1.0 - w) * g[k] for k in sorted(e)}
    z = math.fsum(mixed.values())
    return LidDistribution({k: v / z for k, v in mixed.items()})


DevItem = tuple[LidDistribution, LidDistribution, str]


def fusion_accuracy(dev: Sequence[DevItem], config: FusionConfig) -> float:
    if not dev:
        raise DataError("empty development set")
    hits = sum(classify(fuse(e, g, config)) == truth for e, g, truth in dev)
    return hits / len(dev)


def default_grid(
    weights: Iterable[float] = DEFAULT_WEIGHTS,
    temperatures: Iterable[float] = DEFAULT_TEMPERATURES,
    tie_temperatures: bool = True,
) -> list[FusionConfig]:
    weights, temperatures = list(weights), list(temperatures)
    if tie_temperatures:
        return [FusionConfig(w, t, t) for w in weights for t in temperatures]
    return [FusionConfig(w, te, tg) for w in weights for te, tg in itertools.product(temperatures, repeat=2)]


def tune_fusion(dev: Sequence[DevItem], grid: Sequence[FusionConfig] | None = None) -> FusionConfig:
    """Grid point with the highest dev accuracy.

    Ties prefer the weight nearest 0.5, then the smallest temperatures. The
    default config always competes, so the result is never worse than it.
    """
    if not dev:
        raise DataError("empty development set")
    candidates = list(grid) if grid is not None else default_grid()
    if not candidates:
        raise DataError("empty fusion grid")
    if FusionConfig() not in candidates:
        candidates.append(FusionConfig())

    def key(cfg: FusionConfig) -> tuple:
        return (-fusion_accuracy(dev, cfg), abs(cfg.weight - 0.5), cfg.weight, cfg.temp_emb + cfg.temp_gen, cfg.temp_emb)

    return min(candidates, key=key)


def write_fusion_config(config: FusionConfig, path: str | Path) -> None:
    Path(path).write_text(
        f"weight={config.weight!r}\ntemp_emb={config.temp_emb!r}\ntemp_gen={config.temp_gen!r}\n", encoding="utf-8"
    )


def read_fusion_config(path: str | Path) -> FusionConfig:
    values: dict[str, float] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {lineno} is not key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in ("weight", "temp_emb", "temp_gen"):
            raise DataError(f"{path}: unknown key {k!r}")
        try:
            values[k] = float(v)
        except ValueError:
            raise DataError(f"{path}: {k} is not a number") from None
    try:
        return FusionConfig(**values)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
