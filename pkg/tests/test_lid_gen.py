import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_post
from oracles import brute_force_decode
from hybridlid.errors import DataError
from hybridlid.lid_gen import (
    LanguagePack,
    LidDistribution,
    build_pack,
    classify,
    load_packs,
    normalize_scores,
    read_pack,
    score_all_languages,
    write_pack,
)
from hybridlid.ngram import train_kneser_ney
from hybridlid.roman import Lexicon
from hybridlid.subword import SubwordVocab
from hybridlid.synth import gen_toy_corpus, make_toy_language, sample_text, synth_posteriors


def tiny_pack(lang, entries, sentences):
    vocab = SubwordVocab({t: -1.0 for t in entries}, len(entries), frozenset())
    lex = Lexicon({t: tuple(t) for t in entries}, lang)
    return LanguagePack(lang, vocab, lex, train_kneser_ney(sentences, 2))


@pytest.fixture(scope="module")
def toy_packs():
    langs = [make_toy_language(code, seed) for code, seed in (("aaa", 1), ("bbb", 2), ("ccc", 3))]
    packs = {}
    for lang in langs:
        corpus = gen_toy_corpus(lang, 300, 25, seed=lang.seed)
        packs[lang.code] = build_pack(corpus, vocab_size=80, seed=0)
    return langs, packs


class TestPackIO:
    def test_roundtrip(self, toy_packs, tmp_path):
        _, packs = toy_packs
        pack = packs["aaa"]
        d = write_pack(pack, tmp_path)
        assert sorted(p.name for p in d.iterdir()) == ["lexicon.tsv", "lm.arpa", "meta.txt", "vocab.tsv"]
        back = read_pack(d)
        assert back.language == "aaa"
        assert back.vocab.entries == pack.vocab.entries
        assert back.vocab.word_marker == pack.vocab.word_marker
        assert back.lexicon.entries == pack.lexicon.entries
        assert back.lm == pack.lm

    def test_load_packs(self, toy_packs, tmp_path):
        _, packs = toy_packs
        for p in packs.values():
            write_pack(p, tmp_path)
        assert sorted(load_packs(tmp_path)) == ["aaa", "bbb", "ccc"]
        assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]

    def test_missing_file(self, toy_packs, tmp_path):
        d = write_pack(toy_packs[1]["aaa"], tmp_path)
        (d / "lm.arpa").unlink()
        with pytest.raises(DataError, match="lm.arpa"):
            read_pack(d)

    def test_lexicon_must_be_subset_of_vocab(self):
        vocab = SubwordVocab({"a": -1.0}, 1, frozenset("a"))
        with pytest.raises(DataError):
            LanguagePack("xx", vocab, Lexicon({"b": ("b",)}, "xx"), train_kneser_ney([["a"]], 2))


class TestScoring:
    def test_own_lexicon_wins(self):
        # "abc" is spellable only with pack A's tokens
        a = tiny_pack("a", ["abc", "b"], [["abc"], ["b", "abc"]])
        b = tiny_pack("b", ["ab", "cb"], [["ab"], ["cb", "ab"]])
        post = make_post(np.eye(4)[[1, 2, 3]])
        scores = score_all_languages(post, [a, b])
        assert scores.per_language["a"] > scores.per_language["b"]
        for pack in (a, b):
            (best, _), _ = brute_force_decode(post, pack.lexicon, pack.lm)
            assert scores.per_language[pack.language] == pytest.approx(best, abs=1e-9)
        assert classify(normalize_scores(scores)) == "a"

    def test_identical_packs_score_equally(self):
        a = tiny_pack("a", ["ab", "b"], [["ab"], ["b", "ab"]])
        b = LanguagePack("b", a.vocab, Lexicon(a.lexicon.entries, "b"), a.lm)
        post = make_post(np.random.default_rng(0).dirichlet(np.ones(3), size=5))
        s = score_all_languages(post, [a, b]).per_language
        assert s["a"] == s["b"]

    def test_single_pack_is_error(self):
        a = tiny_pack("a", ["ab"], [["ab"]])
        with pytest.raises(DataError, match="two"):
            score_all_languages(make_post([[1, 0, 0]]), [a])

    def test_incompatible_pack(self):
        a = tiny_pack("a", ["ab"], [["ab"]])
        z = tiny_pack("z", ["zz"], [["zz"]])
        with pytest.raises(DataError, match="z: \\['z'\\]"):
            score_all_languages(make_post([[1, 0, 0]]), [a, z])

    def test_order_independent(self, toy_packs):
        langs, packs = toy_packs
        rng = np.random.default_rng(5)
        post = synth_posteriors(sample_text(langs[0], 15, rng), 0.1, 0.2, 1, seed=1)
        fwd = score_all_languages(post, list(packs.values()))
        rev = score_all_languages(post, list(reversed(list(packs.values()))))
        assert fwd.per_language == rev.per_language

    def test_relabeling_permutes_outputs(self, toy_packs):
        langs, packs = toy_packs
        rng = np.random.default_rng(6)
        post = synth_posteriors(sample_text(langs[1], 15, rng), 0.1, 0.2, 1, seed=2)
        rename = {"aaa": "zzz", "bbb": "yyy", "ccc": "xxx"}
        relabeled = {
            rename[k]: LanguagePack(rename[k], p.vocab, Lexicon(p.lexicon.entries, rename[k]), p.lm)
            for k, p in packs.items()
        }
        orig = score_all_languages(post, packs).per_language
        new = score_all_languages(post, relabeled).per_language
        assert {rename[k]: v for k, v in orig.items()} == new
        assert classify(normalize_scores(new)) == rename[classify(normalize_scores(orig))]

    def test_self_consistency(self, toy_packs):
        langs, packs = toy_packs
        rng = np.random.default_rng(7)
        hits = {eps: 0 for eps in (0.0, 0.1, 0.3)}
        n = 0
        for i in range(30):
            lang = langs[i % 3]
            text = sample_text(lang, 20, rng)
            n += 1
            for eps in hits:
                post = synth_posteriors(text, eps, 0.2, 1, seed=i)
                hits[eps] += classify(normalize_scores(score_all_languages(post, packs))) == lang.code
        assert hits[0.0] == n
        assert hits[0.1] >= 0.9 * n
        assert hits[0.0] >= hits[0.1] >= hits[0.3]


class TestNormalize:
    def test_equal_scores_uniform(self):
        d = normalize_scores({"a": -3.0, "b": -3.0, "c": -3.0, "d": -3.0})
        assert all(p == 0.25 for p in d.probs.values())

    def test_large_margin(self):
        d = normalize_scores({"a": -10.0, "b": -1010.0})
        assert d.probs["a"] == 1.0 and d.probs["b"] == 0.0

    def test_softmax_in_natural_log(self):
        d = normalize_scores({"a": 0.0, "b": -1.0})
        assert d.probs["a"] == pytest.approx(10 / 11, abs=1e-15)

    def test_all_minus_inf(self):
        d = normalize_scores({"a": -math.inf, "b": -math.inf})
        assert d.probs == {"a": 0.5, "b": 0.5}

    def test_argmax_matches_raw_argmax(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 10))
            raw = dict(zip((f"l{i:02d}" for i in range(n)), rng.normal(-50, 20, size=n)))
            oracle = max(sorted(raw), key=lambda k: raw[k])
            assert classify(normalize_scores(raw)) == oracle

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e4, 0, allow_nan=False), min_size=2, max_size=8))
    def test_sums_to_one(self, values):
        d = normalize_scores({f"l{i}": v for i, v in enumerate(values)})
        assert math.fsum(d.probs.values()) == pytest.approx(1.0, abs=1e-9)


class TestClassify:
    def test_argmax(self):
        assert classify(LidDistribution({"rus": 0.7, "eng": 0.3})) == "rus"

    def test_tie_goes_to_smallest_code(self):
        assert classify(LidDistribution({"b": 0.5, "a": 0.5})) == "a"

    def test_uniform(self):
        assert classify(LidDistribution({"z": 1 / 3, "x": 1 / 3, "y": 1 / 3})) == "x"

    def test_invalid_distribution(self):
        with pytest.raises(ValueError):
            LidDistribution({"a": 0.5, "b": 0.6})
