"""CER and LID metrics, challenge-style aggregate scores, and language-to-ASR-model routing."""

from __future__ import annotations

import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError

WORST_K = 15

# cheapest first; ties in routing go to the earlier model
MODEL_PRECEDENCE = ("mms-zeroshot", "mms-1b-all", "seamlessm4t")

_ZEROSHOT = "nbl ssw tok tsn ven"
_MMS = (
    "abk amh ami asm ast azz bak ban bas bel bos bre btk ceb chv cnh cym div epo frr ful grn hat hau heb "
    "hin hsb ibo ina kab kam kan kaz kea khm kin kmr lga lin lit ltz lug luo mhr mkd mri mrj msa myv nan "
    "nod nso nya oci orm pan pus que sah sin skr slk sna snd som sot sou spa sun tam tat tel tgk tgl tos "
    "tpi trv tso tts uig umb uzb wol xho xty yor zul"
)
_SEAMLESS = (
    "afr ara aze ben bul cat ces ckb cmn dan deu ell eng est eus fas fin fra gle glg guj hrv hun hye ind "
    "isl ita jav jpn kat kir kor lao lav mal mar mlt mon mya nep nld ori pol por ron rus slv srp swa swe "
    "tha tur ukr urd vie yue"
)
# the published final-system routing (languages -> ASR model)
REFERENCE_ROUTING: dict[str, str] = {
    **{lang: "mms-zeroshot" for lang in _ZEROSHOT.split()},
    **{lang: "mms-1b-all" for lang in _MMS.split()},
    **{lang: "seamlessm4t" for lang in _SEAMLESS.split()},
}


# ---------------------------------------------------------------------------
# string metrics


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance, O(len(a) * len(b)) time and O(len(b)) memory."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(reference: str, hypothesis: str) -> float:
    """Character edit distance over reference length; may exceed 1."""
    if not reference:
        raise DataError("CER is undefined for an empty reference")
    return levenshtein(reference, hypothesis) / len(reference)


# ---------------------------------------------------------------------------
# per-utterance results


@dataclass(frozen=True)
class UttResult:
    utt_id: str
    true_language: str
    predicted_language: str | None = None
    reference_text: str | None = None
    hypothesis_text: str | None = None
    model_id: str | None = None

    @property
    def cer(self) -> float:
        if self.reference_text is None or self.hypothesis_text is None:
            raise DataError(f"utterance {self.utt_id!r} lacks a reference or hypothesis")
        return cer(self.reference_text, self.hypothesis_text)


def _check_unique(results: Sequence[UttResult]) -> None:
    dup = [k for k, n in Counter(r.utt_id for r in results).items() if n > 1]
    if dup:
        raise DataError(f"duplicate utterance ids: {sorted(dup)[:5]}")


def mean_cer_by_language(results: Sequence[UttResult]) -> tuple[dict[str, float], float]:
    """Per-language mean utterance CER, and the unweighted mean over languages."""
    if not results:
        raise DataError("no results: macro CER is undefined")
    _check_unique(results)
    by_lang: dict[str, list[float]] = defaultdict(list)
    for r in results:
        by_lang[r.true_language].append(r.cer)
    per = {lang: math.fsum(v) / len(v) for lang, v in sorted(by_lang.items())}
    return per, math.fsum(per.values()) / len(per)


def lid_accuracy(
    results: Sequence[UttResult], parent_of: Mapping[str, str] | None = None
) -> float:
    """Fraction of correct predictions; with ``parent_of``, predicting the parent language also counts."""
    if not results:
        raise DataError("no results: LID accuracy is undefined")
    hits = 0
    for r in results:
        if r.predicted_language is None:
            raise DataError(f"utterance {r.utt_id!r} has no predicted language")
        ok = r.predicted_language == r.true_language
        if not ok and parent_of is not None:
            ok = r.predicted_language == parent_of.get(r.true_language)
        hits += ok
    return hits / len(results)


def confusion_pairs(results: Sequence[UttResult], top_k: int | None = None) -> list[tuple[tuple[str, str], int]]:
    """Most frequent (true, predicted) errors, by count descending then pair."""
    if not results:
        raise DataError("no results to analyse")
    counts: Counter = Counter()
    for r in results:
        if r.predicted_language is None:
            raise DataError(f"utterance {r.utt_id!r} has no predicted language")
        if r.predicted_language != r.true_language:
            counts[(r.true_language, r.predicted_language)] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked if top_k is None else ranked[:top_k]


# ---------------------------------------------------------------------------
# challenge score


@dataclass(frozen=True)
class ChallengeScore:
    lid_accuracy: float
    mean_cer: float
    std_cer: float
    worst15_cer: float
    dialect_lid_accuracy: float
    dialect_cer: float
    worst_k: int = WORST_K  # fewer than 15 when the main set has fewer languages
    per_language_cer: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        for name in ("lid_accuracy", "dialect_lid_accuracy"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("mean_cer", "std_cer", "worst15_cer", "dialect_cer"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def worst_flagged(self) -> bool:
        return self.worst_k < WORST_K

    def metrics(self) -> dict[str, float]:
        return {
            "lid_accuracy": self.lid_accuracy,
            "mean_cer": self.mean_cer,
            "std_cer": self.std_cer,
            "worst15_cer": self.worst15_cer,
            "dialect_lid_accuracy": self.dialect_lid_accuracy,
            "dialect_cer": self.dialect_cer,
        }


def worst_k_mean(per_language: Mapping[str, float], k: int = WORST_K) -> tuple[float, int]:
    if not per_language:
        raise DataError("no languages")
    k = min(k, len(per_language))
    worst = sorted(per_language.values(), reverse=True)[:k]
    return math.fsum(worst) / k, k


def challenge_score(
    results_main: Sequence[UttResult],
    results_dialect: Sequence[UttResult],
    dialect_parent: Mapping[str, str] | None = None,
) -> ChallengeScore:
    """Six aggregate metrics; std is the population standard deviation over per-language CERs.

    Dialect LID is scored on exact labels unless ``dialect_parent`` grants parent-language credit.
    """
    if not results_main or not results_dialect:
        raise DataError("both the main and dialect result sets must be non-empty")
    per, macro = mean_cer_by_language(results_main)
    worst, k = worst_k_mean(per)
    _, dialect_macro = mean_cer_by_language(results_dialect)
    return ChallengeScore(
        lid_accuracy=lid_accuracy(results_main),
        mean_cer=macro,
        std_cer=statistics.pstdev(per.values()),
        worst15_cer=worst,
        dialect_lid_accuracy=lid_accuracy(results_dialect, dialect_parent),
        dialect_cer=dialect_macro,
        worst_k=k,
        per_language_cer=per,
    )


def format_report(score: ChallengeScore) -> str:
    """Human-readable summary table."""
    rows = [(name, f"{value:.4f}") for name, value in score.metrics().items()]
    if score.worst_flagged:
        rows.append(("note", f"worst15_cer averages only the {score.worst_k} available languages"))
    rows += [(f"cer[{lang}]", f"{v:.4f}") for lang, v in sorted(score.per_language_cer.items())]
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"


def report_tsv(score: ChallengeScore) -> str:
    lines = [f"metric\t{k}\t{v!r}" for k, v in score.metrics().items()]
    lines.append(f"metric\tworst_k\t{score.worst_k}")
    lines += [f"language\t{lang}\t{v!r}" for lang, v in sorted(score.per_language_cer.items())]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# routing


@dataclass(frozen=True)
class CerTable:
    """Mean dev CER per (language, model) over the models that support each language."""

    cer: Mapping[tuple[str, str], float]
    support: Mapping[str, frozenset[str]]
    precedence: tuple[str, ...] = MODEL_PRECEDENCE

    def __post_init__(self) -> None:
        for (lang, model), v in self.cer.items():
            if model not in self.support or lang not in self.support[model]:
                raise DataError(f"CER cell ({lang}, {model}) for a model that does not support the language")
            if not (v >= 0 and math.isfinite(v)):
                raise DataError(f"CER cell ({lang}, {model}) must be finite and >= 0")
        for model, langs in self.support.items():
            for lang in langs:
                if (lang, model) not in self.cer:
                    raise DataError(f"model {model!r} supports {lang!r} but has no CER for it")
        unknown = set(self.support) - set(self.precedence)
        if unknown:
            raise DataError(f"models missing from the precedence order: {sorted(unknown)}")

    @property
    def languages(self) -> list[str]:
        return sorted({lang for lang, _ in self.cer})

    def models_for(self, language: str) -> list[str]:
        return [m for m in self.precedence if m in self.support and language in self.support[m]]


RoutingTable = dict[str, str]


def cer_table_from_results(
    results: Iterable[UttResult], precedence: Sequence[str] = MODEL_PRECEDENCE
) -> CerTable:
    """Group utterance CERs by (language, model_id); support is whatever was observed."""
    cells: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in results:
        if r.model_id is None:
            raise DataError(f"utterance {r.utt_id!r} has no model id")
        cells[(r.true_language, r.model_id)].append(r.cer)
    support: dict[str, set[str]] = defaultdict(set)
    for lang, model in cells:
        support[model].add(lang)
    return CerTable(
        {k: math.fsum(v) / len(v) for k, v in cells.items()},
        {m: frozenset(s) for m, s in support.items()},
        tuple(precedence),
    )


def optimize_routing(table: CerTable) -> RoutingTable:
    """Per language, the supporting model with the lowest CER; ties go to the cheaper model."""
    routing = {}
    for lang in table.languages:
        models = table.models_for(lang)
        if not models:
            raise DataError(f"no model supports {lang!r}")
        routing[lang] = min(models, key=lambda m: (table.cer[(lang, m)], table.precedence.index(m)))
    return routing


def routed_macro_cer(table: CerTable, routing: Mapping[str, str]) -> float:
    langs = table.languages
    missing = [lang for lang in langs if lang not in routing]
    if missing:
        raise DataError(f"routing lacks languages: {missing[:5]}")
    for lang in langs:
        if (lang, routing[lang]) not in table.cer:
            raise DataError(f"{routing[lang]!r} does not support {lang!r}")
    return math.fsum(table.cer[(lang, routing[lang])] for lang in langs) / len(langs)


def fixed_model_routing(table: CerTable, model: str) -> RoutingTable:
    """Send every language to ``model``, falling back along the precedence order where it lacks support.

    The fallback tries cheaper models first (nearest below ``model``), then more expensive ones.
    """
    if model not in table.precedence:
        raise DataError(f"unknown model {model!r}")
    pos = table.precedence.index(model)
    order = [model] + list(reversed(table.precedence[:pos])) + list(table.precedence[pos + 1 :])
    routing = {}
    for lang in table.languages:
        for m in order:
            if m in table.support and lang in table.support[m]:
                routing[lang] = m
                break
        else:
            raise DataError(f"no model supports {lang!r}")
    return routing


def cascade_macro_cer(table: CerTable, models: Sequence[str]) -> float:
    """Macro CER of a model stack: each language uses the last model in ``models`` that supports it."""
    routing = {}
    for lang in table.languages:
        chosen = [m for m in models if m in table.support and lang in table.support[m]]
        if not chosen:
            raise DataError(f"no model in {list(models)} supports {lang!r}")
        routing[lang] = chosen[-1]
    return routed_macro_cer(table, routing)


def write_routing(routing: Mapping[str, str], path: str | Path) -> None:
    Path(path).write_text("".join(f"{lang}\t{m}\n" for lang, m in sorted(routing.items())), encoding="utf-8")


def read_cer_table(path: str | Path, precedence: Sequence[str] = MODEL_PRECEDENCE) -> CerTable:
    """Rows ``language<TAB>model<TAB>cer``; support is taken from the rows present."""
    cells: dict[tuple[str, str], float] = {}
    support: dict[str, set[str]] = defaultdict(set)
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}: line {lineno} is not language<TAB>model<TAB>cer")
        try:
            value = float(parts[2])
        except ValueError:
            raise DataError(f"{path}: line {lineno} has a non-numeric CER") from None
        key = (parts[0], parts[1])
        if key in cells:
            raise DataError(f"{path}: duplicate cell {key} at line {lineno}")
        cells[key] = value
        support[parts[1]].add(parts[0])
    extra = [m for m in sorted(support) if m not in precedence]
    return CerTable(cells, {m: frozenset(s) for m, s in support.items()}, tuple(precedence) + tuple(extra))
