"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error. Failures
print one line, ``hybridlid: <category>: <message>``, to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .batch import ManifestEntry, atomic_write_text, read_manifest, run_parallel_scoring, write_manifest
from .corpus import load_corpus, write_corpus
from .ctc import DecoderConfig, read_posteriors, write_posteriors
from .errors import DataError, InvariantError
from .evaluation import (
    MODEL_PRECEDENCE,
    UttResult,
    confusion_pairs,
    fixed_model_routing,
    lid_accuracy,
    mean_cer_by_language,
    optimize_routing,
    read_cer_table,
    routed_macro_cer,
    worst_k_mean,
    write_routing,
)
from .fusion import (
    DEFAULT_TEMPERATURES,
    DEFAULT_WEIGHTS,
    FusionConfig,
    default_grid,
    fuse,
    fusion_accuracy,
    read_fusion_config,
    tune_fusion,
    write_fusion_config,
)
from .lid_emb import (
    classify_embedding,
    embed_utterance,
    fit_classifier,
    init_pooler,
    read_classifier,
    read_embeddings,
    read_encoder_activations,
    read_pooler,
    write_classifier,
    write_embeddings,
    write_pooler,
)
from .lid_gen import LidDistribution, build_pack, classify, decode_language, normalize_scores, read_pack, write_pack
from .roman import builtin_roman_map, read_roman_map
from .synth import gen_toy_corpus, make_toy_language, sample_text, synth_posteriors

logger = logging.getLogger("hybridlid")

EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# score files


def format_distribution(utt_id: str, dist: LidDistribution) -> str:
    rows = [f"{utt_id}\t{lang}\t{dist.probs[lang]!r}\n" for lang in sorted(dist.probs)]
    rows.append(f"{utt_id}\tbest\t{classify(dist)}\n")
    return "".join(rows)


def read_score_file(path: str | Path) -> dict[str, LidDistribution]:
    """Parse ``utt<TAB>lang<TAB>prob`` rows (``best`` summary rows are skipped)."""
    probs: dict[str, dict[str, float]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}: line {lineno} is not utt<TAB>lang<TAB>value")
        if parts[1] == "best":
            continue
        try:
            probs.setdefault(parts[0], {})[parts[1]] = float(parts[2])
        except ValueError:
            raise DataError(f"{path}: line {lineno} has a non-numeric probability") from None
    try:
        return {utt: LidDistribution(p) for utt, p in probs.items()}
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _read_kv_tsv(path: str | Path, what: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise DataError(f"{path}: line {lineno} is not utt<TAB>{what}")
        out[parts[0]] = parts[1]
    return out


def _atomic(writer, obj, path: str | Path) -> None:
    """Run ``writer(obj, tmp)`` next to ``path``, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        writer(obj, tmp)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _decoder_config(args: argparse.Namespace) -> DecoderConfig:
    try:
        return DecoderConfig(args.beam_width, args.lm_weight, args.word_bonus, args.blank_bias)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_build_pack(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus, args.lang)
    if not corpus.lines:
        raise DataError(f"{args.corpus}: no usable lines after normalization")
    rmap = read_roman_map(args.roman_map) if args.roman_map else builtin_roman_map()
    pack = build_pack(
        corpus,
        vocab_size=args.vocab_size,
        order=args.order,
        max_lines=args.max_lines,
        seed=args.seed,
        rmap=rmap,
    )
    out = write_pack(pack, args.out)
    print(f"{out}\tvocab={len(pack.vocab)}\tlexicon={len(pack.lexicon)}\torder={pack.lm.order}")
    return 0


def _fusion_config(args: argparse.Namespace) -> FusionConfig:
    cfg = read_fusion_config(args.fusion_config) if args.fusion_config else FusionConfig()
    weight = args.fusion_weight if args.fusion_weight is not None else cfg.weight
    t_emb, t_gen = cfg.temp_emb, cfg.temp_gen
    if args.temperature is not None:
        t_emb = t_gen = args.temperature
    try:
        return FusionConfig(weight, t_emb, t_gen)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_classify(args: argparse.Namespace) -> int:
    entries = read_manifest(args.manifest)
    gen: dict[str, LidDistribution] = {}
    hyps: dict[str, str] = {}
    if args.mode in ("generative", "fused"):
        if not args.packs:
            raise UsageError(f"--packs is required for --mode {args.mode}")
        scored = run_parallel_scoring(entries, args.packs, args.workers, _decoder_config(args))
        for utt, scores in scored:
            dist = normalize_scores(scores)
            gen[utt] = dist
            hyps[utt] = scores.hypotheses[classify(dist)].text
    emb: dict[str, LidDistribution] = {}
    if args.mode in ("embedding", "fused"):
        if not (args.embeddings and args.emb_model):
            raise UsageError(f"--embeddings and --emb-model are required for --mode {args.mode}")
        model = read_classifier(args.emb_model)
        vectors = read_embeddings(args.embeddings)
        for e in entries:
            if e.utt_id not in vectors:
                raise DataError(f"utterance {e.utt_id!r} has no embedding in {args.embeddings}")
            emb[e.utt_id] = classify_embedding(vectors[e.utt_id], model)

    if args.mode == "generative":
        final = gen
    elif args.mode == "embedding":
        final = emb
    else:
        cfg = _fusion_config(args)
        final = {}
        for e in entries:
            try:
                final[e.utt_id] = fuse(emb[e.utt_id], gen[e.utt_id], cfg)
            except DataError as exc:
                raise DataError(f"utterance {e.utt_id!r}: {exc}") from None
    atomic_write_text(args.out, "".join(format_distribution(e.utt_id, final[e.utt_id]) for e in entries))
    if args.hyp_out:
        if not hyps:
            raise UsageError("--hyp-out needs generative decoding (--mode generative or fused)")
        atomic_write_text(args.hyp_out, "".join(f"{e.utt_id}\t{hyps[e.utt_id]}\n" for e in entries))
    return 0


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers") from None
    if not values:
        raise UsageError(f"{flag} is empty")
    return values


def cmd_fuse_tune(args: argparse.Namespace) -> int:
    entries = read_manifest(args.manifest)
    emb = read_score_file(args.emb_scores)
    gen = read_score_file(args.gen_scores)
    dev = []
    for e in entries:
        if e.utt_id not in emb or e.utt_id not in gen:
            raise DataError(f"utterance {e.utt_id!r} is missing from a score file")
        dev.append((emb[e.utt_id], gen[e.utt_id], e.language))
    try:
        grid = default_grid(
            _parse_floats(args.weights, "--weights"),
            _parse_floats(args.temperatures, "--temperatures"),
            tie_temperatures=not args.independent_temps,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    best = tune_fusion(dev, grid)
    _atomic(write_fusion_config, best, args.out)
    print(
        f"weight={best.weight!r}\ttemp_emb={best.temp_emb!r}\ttemp_gen={best.temp_gen!r}"
        f"\tdev_accuracy={fusion_accuracy(dev, best)!r}\tuniform_accuracy={fusion_accuracy(dev, FusionConfig())!r}"
    )
    return 0


def _results(manifest: str, pred: str, hyps: str | None) -> tuple[list[UttResult], bool]:
    entries = read_manifest(manifest)
    dists = read_score_file(pred)
    hyp_text = _read_kv_tsv(hyps, "hypothesis") if hyps else {}
    out = []
    for e in entries:
        if e.utt_id not in dists:
            raise DataError(f"utterance {e.utt_id!r} has no prediction in {pred}")
        h = None
        if hyps:
            if e.utt_id not in hyp_text:
                raise DataError(f"utterance {e.utt_id!r} has no hypothesis in {hyps}")
            if not e.reference:
                raise DataError(f"utterance {e.utt_id!r} has no reference text in {manifest}")
            h = hyp_text[e.utt_id]
        out.append(UttResult(e.utt_id, e.language, classify(dists[e.utt_id]), e.reference, h))
    return out, bool(hyps)


def cmd_evaluate(args: argparse.Namespace) -> int:
    main_res, with_cer = _results(args.manifest, args.pred, args.hyps)
    metrics: dict[str, float] = {"lid_accuracy": lid_accuracy(main_res)}
    per: dict[str, float] = {}
    if with_cer:
        per, macro = mean_cer_by_language(main_res)
        worst, k = worst_k_mean(per)
        metrics.update(
            mean_cer=macro,
            std_cer=statistics.pstdev(per.values()),
            worst15_cer=worst,
            worst_k=float(k),
        )
    if args.dialect_manifest:
        if not args.dialect_pred:
            raise UsageError("--dialect-manifest needs --dialect-pred")
        parent = None
        if args.dialect_credit == "parent":
            if not args.parent_map:
                raise UsageError("--dialect-credit parent needs --parent-map")
            parent = _read_kv_tsv(args.parent_map, "parent")
        d_res, d_cer = _results(args.dialect_manifest, args.dialect_pred, args.dialect_hyps)
        metrics["dialect_lid_accuracy"] = lid_accuracy(d_res, parent)
        if d_cer:
            metrics["dialect_cer"] = mean_cer_by_language(d_res)[1]
    confusions = confusion_pairs(main_res, args.top_k)

    width = max(len(k) for k in metrics)
    lines = [f"{k:<{width}}  {v:.4f}" for k, v in metrics.items()]
    if with_cer and metrics["worst_k"] < 15:
        lines.append(f"note: worst15_cer averages only {int(metrics['worst_k'])} languages")
    if confusions:
        lines.append("top confusions (reference -> predicted):")
        lines += [f"  {a} -> {b}\t{n}" for (a, b), n in confusions]
    print("\n".join(lines))
    if args.out:
        rows = [f"metric\t{k}\t{v!r}\n" for k, v in metrics.items()]
        rows += [f"language\t{lang}\t{v!r}\n" for lang, v in sorted(per.items())]
        rows += [f"confusion\t{a}->{b}\t{n}\n" for (a, b), n in confusions]
        atomic_write_text(args.out, "".join(rows))
    return 0


def cmd_route(args: argparse.Namespace) -> int:
    precedence = tuple(p for p in args.precedence.split(",") if p)
    table = read_cer_table(args.cer_table, precedence)
    routing = optimize_routing(table)
    _atomic(write_routing, routing, args.out)
    print(f"routed\t{routed_macro_cer(table, routing)!r}")
    for model in table.precedence:
        if model in table.support:
            print(f"fixed:{model}\t{routed_macro_cer(table, fixed_model_routing(table, model))!r}")
    return 0


def fixture_language_codes(n: int) -> list[str]:
    return [f"t{i:03d}" for i in range(n)]


def make_fixture(
    out: str | Path,
    n_languages: int = 20,
    n_lines: int = 1000,
    line_len: int = 30,
    utts_per_language: int = 10,
    utt_len: int = 20,
    noise_eps: float = 0.1,
    blank_rate: float = 0.2,
    frames_per_char: int = 1,
    seed: int = 0,
    build_packs: bool = False,
    vocab_size: int = 300,
) -> list[ManifestEntry]:
    """Write corpora, posteriors, a manifest and optionally packs for ``n_languages`` toy languages."""
    out = Path(out)
    (out / "corpora").mkdir(parents=True, exist_ok=True)
    (out / "posteriors").mkdir(exist_ok=True)
    entries = []
    for i, code in enumerate(fixture_language_codes(n_languages)):
        lang = make_toy_language(code, seed * 100_003 + i)
        corpus = gen_toy_corpus(lang, n_lines, line_len, seed * 100_003 + 50_000 + i)
        write_corpus(corpus, out / "corpora" / f"{code}.txt")
        if build_packs:
            write_pack(build_pack(corpus, vocab_size=vocab_size, seed=seed), out / "packs")
        rng = np.random.default_rng([seed, i, 7])
        for j in range(utts_per_language):
            text = sample_text(lang, utt_len, rng)
            utt = f"{code}-{j:03d}"
            post = synth_posteriors(text, noise_eps, blank_rate, frames_per_char, seed=int(rng.integers(2**31)))
            path = out / "posteriors" / f"{utt}.post"
            write_posteriors(post, path)
            entries.append(ManifestEntry(utt, code, Path("posteriors") / f"{utt}.post", text))
    write_manifest(entries, out / "manifest.tsv")
    return entries


def cmd_make_fixture(args: argparse.Namespace) -> int:
    entries = make_fixture(
        args.out,
        n_languages=args.languages,
        n_lines=args.lines,
        line_len=args.line_len,
        utts_per_language=args.utts_per_language,
        utt_len=args.utt_len,
        noise_eps=args.noise,
        blank_rate=args.blank_rate,
        frames_per_char=args.frames_per_char,
        seed=args.seed,
        build_packs=args.build_packs,
        vocab_size=args.vocab_size,
    )
    print(f"{args.out}\tlanguages={args.languages}\tutterances={len(entries)}")
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    pack = read_pack(args.pack)
    post = read_posteriors(args.posteriors)
    res = decode_language(post, pack, _decoder_config(args))
    line = (
        f"{res.text}\t{' '.join(res.tokens)}\t{res.acoustic_logscore!r}"
        f"\t{res.lm_logscore!r}\t{res.total_logscore!r}\n"
    )
    if args.out:
        atomic_write_text(args.out, line)
    else:
        sys.stdout.write(line)
    return 0


def cmd_fit_embedding(args: argparse.Namespace) -> int:
    entries = read_manifest(args.manifest)
    vectors = read_embeddings(args.embeddings)
    missing = [e.utt_id for e in entries if e.utt_id not in vectors]
    if missing:
        raise DataError(f"utterances without embeddings: {missing[:5]}")
    x = np.stack([vectors[e.utt_id].vector for e in entries])
    labels = [e.language for e in entries]
    model = fit_classifier(x, labels, out_dim=args.lda_dim, shrinkage=args.shrinkage, l2=args.l2)
    _atomic(write_classifier, model, args.out)
    print(f"{args.out}\tclasses={len(model.lda.classes)}\tlda_dim={model.lda.out_dim}")
    return 0


def cmd_init_pooler(args: argparse.Namespace) -> int:
    params = init_pooler(
        args.seed, args.n_classes, args.layers, args.dim, args.heads, args.att_hidden, args.emb_dim,
        temperatures=tuple(2.0 ** (k - 1) for k in range(args.heads)),
    )
    _atomic(write_pooler, params, args.out)
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    params = read_pooler(args.pooler)
    listing = Path(args.activations)
    embs = []
    for utt, rel in _read_kv_tsv(listing, "activations_path").items():
        try:
            layers = read_encoder_activations(listing.parent / rel)
            embs.append(embed_utterance(layers, params, utt))
        except DataError as exc:
            raise DataError(f"utterance {utt!r}: {exc}") from None
    _atomic(write_embeddings, embs, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_decoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beam-width", type=int, default=64, help="hypotheses kept per frame")
    p.add_argument("--lm-weight", type=float, default=1.0, help="LM scale")
    p.add_argument("--word-bonus", type=float, default=0.0, help="log10 bonus per token")
    p.add_argument("--blank-bias", type=float, default=0.0, help="natural-log bias added to blank frames")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="hybridlid", description="Hybrid spoken language identification toolkit.", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    subs = {}

    def add(name: str, help_text: str, func) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        p.add_argument("--config", help="key=value file of defaults for this command (flags take precedence)")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("build-pack", "build a language pack from a text corpus", cmd_build_pack)
    p.add_argument("--lang", required=True, help="language code")
    p.add_argument("--corpus", required=True, help="UTF-8 text, one sentence per line")
    p.add_argument("--out", required=True, help="pack root; the pack goes to OUT/LANG")
    p.add_argument("--vocab-size", type=int, default=10_000)
    p.add_argument("--order", type=int, default=2, help="n-gram order (2 for LID, 4 for ASR packs)")
    p.add_argument("--max-lines", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--roman-map", help="romanization table (default: built-in)")

    p = add("classify", "identify the language of every utterance in a manifest", cmd_classify)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="score TSV")
    p.add_argument("--mode", choices=("generative", "embedding", "fused"), default="generative")
    p.add_argument("--packs", help="pack root directory")
    p.add_argument("--embeddings", help="embedding TSV")
    p.add_argument("--emb-model", help="fitted embedding classifier")
    p.add_argument("--fusion-config", help="tuned fusion config")
    p.add_argument("--fusion-weight", type=float, default=None, help="mass on the embedding model")
    p.add_argument("--temperature", type=float, default=None, help="temperature for both sources")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--hyp-out", help="write the best language's hypothesis text per utterance")
    _add_decoder_flags(p)

    p = add("fuse-tune", "tune fusion weight and temperature on development scores", cmd_fuse_tune)
    p.add_argument("--manifest", required=True)
    p.add_argument("--emb-scores", required=True)
    p.add_argument("--gen-scores", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default=",".join(map(str, DEFAULT_WEIGHTS)))
    p.add_argument("--temperatures", default=",".join(map(str, DEFAULT_TEMPERATURES)))
    p.add_argument("--independent-temps", action="store_true", help="search the two temperatures separately")

    p = add("evaluate", "LID accuracy, CER metrics and confusions", cmd_evaluate)
    p.add_argument("--pred", required=True, help="score TSV from classify")
    p.add_argument("--manifest", required=True)
    p.add_argument("--hyps", help="utt<TAB>hypothesis text, enables CER metrics")
    p.add_argument("--dialect-pred")
    p.add_argument("--dialect-manifest")
    p.add_argument("--dialect-hyps")
    p.add_argument("--dialect-credit", choices=("exact", "parent"), default="exact")
    p.add_argument("--parent-map", help="variety<TAB>parent language")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--out", help="machine-readable report TSV")

    p = add("route", "choose the best ASR model per language from dev CERs", cmd_route)
    p.add_argument("--cer-table", required=True, help="language<TAB>model<TAB>cer rows")
    p.add_argument("--out", required=True)
    p.add_argument("--precedence", default=",".join(MODEL_PRECEDENCE), help="tie-break order, cheapest first")

    p = add("make-fixture", "write a synthetic multi-language fixture", cmd_make_fixture)
    p.add_argument("--out", required=True)
    p.add_argument("--languages", type=int, default=20)
    p.add_argument("--lines", type=int, default=1000)
    p.add_argument("--line-len", type=int, default=30)
    p.add_argument("--utts-per-language", type=int, default=10)
    p.add_argument("--utt-len", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--blank-rate", type=float, default=0.2)
    p.add_argument("--frames-per-char", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--build-packs", action="store_true", help="also build packs under OUT/packs")
    p.add_argument("--vocab-size", type=int, default=300)

    p = add("decode", "decode one posterior file with one pack", cmd_decode)
    p.add_argument("--pack", required=True)
    p.add_argument("--posteriors", required=True)
    p.add_argument("--out")
    _add_decoder_flags(p)

    p = add("fit-embedding", "fit LDA and logistic regression on labelled embeddings", cmd_fit_embedding)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--manifest", required=True, help="supplies the language labels")
    p.add_argument("--out", required=True)
    p.add_argument("--lda-dim", type=int, default=100)
    p.add_argument("--shrinkage", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-4)

    p = add("init-pooler", "write seeded random pooler parameters", cmd_init_pooler)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-classes", type=int, required=True)
    p.add_argument("--layers", type=int, default=24)
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--att-hidden", type=int, default=256)
    p.add_argument("--emb-dim", type=int, default=512)

    p = add("embed", "extract embeddings from encoder activations", cmd_embed)
    p.add_argument("--pooler", required=True)
    p.add_argument("--activations", required=True, help="utt<TAB>ENCACT1 path rows")
    p.add_argument("--out", required=True)
    return parser, subs


def _apply_config_file(sub: argparse.ArgumentParser, path: str) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "func")}
    defaults = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno} is not key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{path}: unknown option {key!r}")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = value.lower() in ("1", "true", "yes")
            continue
        try:
            defaults[dest] = action.type(value) if action.type else value
        except ValueError:
            raise UsageError(f"{path}: bad value for {key!r}") from None
        if action.choices is not None and defaults[dest] not in action.choices:
            raise UsageError(f"{path}: {key} must be one of {list(action.choices)}")
        action.required = False
    sub.set_defaults(**defaults)


def _parse(argv: Sequence[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(list(argv))
    if known.config:
        command = next((a for a in argv if a in subs), None)
        if command is None:
            raise UsageError("--config must follow a subcommand")
        _apply_config_file(subs[command], known.config)
    args = parser.parse_args(list(argv))
    if args.command is None:
        raise UsageError("missing subcommand (see --help)")
    return args


def _check_args(args: argparse.Namespace) -> None:
    if getattr(args, "workers", 1) < 1:
        raise UsageError("--workers must be >= 1")
    for name in ("manifest", "corpus", "posteriors", "pred", "embeddings", "emb_model", "fusion_config", "cer_table"):
        value = getattr(args, name, None)
        if value and not Path(value).is_file():
            raise DataError(f"{value}: no such file")
    for name in ("packs", "pack"):
        value = getattr(args, name, None)
        if value and not Path(value).is_dir():
            raise DataError(f"{value}: no such directory")


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        try:
            args = _parse(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        _check_args(args)
        return args.func(args)
    except UsageError as exc:
        print(f"hybridlid: usage-error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"hybridlid: data-error: {_one_line(exc)}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"hybridlid: internal-error: {_one_line(exc)}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort category
        print(f"hybridlid: internal-error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return EXIT_INTERNAL


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


if __name__ == "__main__":
    sys.exit(main())
