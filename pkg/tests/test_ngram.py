import math
import random

import pytest

from oracles import CORPUS, hand_kn_bigram
from hybridlid.errors import DataError
from hybridlid.ngram import (
    EOS,
    UNK,
    read_arpa,
    score_sequence,
    successor_mass,
    train_kneser_ney,
    write_arpa,
)

class TestHandOracle:
    uni, bi = hand_kn_bigram()
    model = train_kneser_ney(CORPUS, 2)

    def test_discounts(self):
        assert self.model.discounts == pytest.approx((0.6, 1 / 3), abs=1e-15)

    def test_bigram_probs(self):
        assert float(self.bi[("a", "b")]) == pytest.approx(0.5946666666666667, abs=1e-15)
        for (h, w), p in self.bi.items():
            assert 10 ** self.model.logprob((h,), w) == pytest.approx(float(p), abs=1e-9), (h, w)

    def test_unigram_probs(self):
        for w, p in self.uni.items():
            assert 10 ** self.model.logprob((), w) == pytest.approx(float(p), abs=1e-9)

    def test_sequence_score(self):
        expected = math.log10(self.bi[("<s>", "a")] * self.bi[("a", "b")] * self.bi[("b", EOS)])
        assert score_sequence(self.model, ["a", "b"]) == pytest.approx(expected, abs=1e-9)


def test_order1_single_sentence_normalizes():
    m = train_kneser_ney([["a"]], 1)
    total = sum(10 ** m.logprob((), w) for w in ["a", EOS, UNK])
    assert total == pytest.approx(1.0, abs=1e-12)


def test_deterministic():
    assert train_kneser_ney(CORPUS, 3) == train_kneser_ney(CORPUS, 3)


def test_empty_sequence_scores_boundary():
    m = train_kneser_ney(CORPUS, 2)
    assert score_sequence(m, []) == m.logprob(("<s>",), EOS)


def test_chain_rule():
    m = train_kneser_ney(CORPUS, 2)
    expected = m.logprob(["<s>"], "a") + m.logprob(["a"], "b") + m.logprob(["b"], EOS)
    assert score_sequence(m, ["a", "b"]) == expected


def test_unknown_token_scores_via_unk():
    m = train_kneser_ney(CORPUS, 2)
    assert m.logprob(["a"], "zzz") == m.logprob(["a"], UNK)
    assert math.isfinite(score_sequence(m, ["zzz", "a"]))


def test_bos_never_predicted():
    m = train_kneser_ney(CORPUS, 3)
    assert all(w != "<s>" for _, w in m.probs)


def random_corpus(rng):
    vocab = [f"w{i}" for i in range(rng.randint(1, 20))]
    sents, budget = [], rng.randint(1, 200)
    while budget > 0:
        n = min(budget, rng.randint(1, 10))
        sents.append([rng.choice(vocab) for _ in range(n)])
        budget -= n
    return sents


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_normalization_random(order):
    rng = random.Random(order)
    for _ in range(15):
        m = train_kneser_ney(random_corpus(rng), order)
        for h in m.histories():
            assert successor_mass(m, h) == pytest.approx(1.0, abs=1e-6)
        assert all(v <= 0 and math.isfinite(v) for v in m.probs.values())


def test_adding_bigram_never_lowers_its_probability():
    rng = random.Random(5)
    for _ in range(40):
        vocab = ["a", "b", "c", "d"]
        base = [[rng.choice(vocab) for _ in range(rng.randint(1, 6))] for _ in range(rng.randint(2, 8))]
        base.append(["a", "b"])  # fixed vocabulary, bigram present
        p0 = train_kneser_ney(base, 2).logprob(["a"], "b")
        p1 = train_kneser_ney(base + [["a", "b"]], 2).logprob(["a"], "b")
        assert p1 >= p0 - 1e-12


def test_degenerate_counts_fall_back(caplog):
    # every continuation count is >= 3: n1 = n2 = 0 at the unigram level
    sents = [[x, y] for x in "abc" for y in "abc"]
    m = train_kneser_ney(sents, 2)
    assert m.discounts[0] == 0.5
    assert "degenerate" in caplog.text


def test_rejects_bad_input():
    with pytest.raises(DataError):
        train_kneser_ney([[]], 2)
    with pytest.raises(ValueError):
        train_kneser_ney(CORPUS, 5)


class TestArpa:
    def test_roundtrip(self, tmp_path):
        rng = random.Random(11)
        for order in (1, 2, 3, 4):
            m = train_kneser_ney(random_corpus(rng), order)
            write_arpa(m, tmp_path / "lm.arpa")
            back = read_arpa(tmp_path / "lm.arpa")
            assert back == m
            for key, v in m.probs.items():
                assert back.probs[key] == pytest.approx(v, abs=1e-9)

    def test_count_mismatch_names_section(self, tmp_path):
        m = train_kneser_ney(CORPUS, 2)
        write_arpa(m, tmp_path / "lm.arpa")
        text = (tmp_path / "lm.arpa").read_text()
        n2 = sum(1 for k in m.probs if len(k[0]) == 1)
        (tmp_path / "bad.arpa").write_text(text.replace(f"ngram 2={n2}", f"ngram 2={n2 + 1}"))
        with pytest.raises(DataError, match=r"2-grams"):
            read_arpa(tmp_path / "bad.arpa")

    def test_bad_header(self, tmp_path):
        (tmp_path / "bad.arpa").write_text("\\data\\\nngram 1=1\n\n\\1-gramz:\n-1\ta\n\\end\\\n")
        with pytest.raises(DataError):
            read_arpa(tmp_path / "bad.arpa")

    def test_minimal_unigram_file(self, tmp_path):
        lp = math.log10(0.25)
        body = "\n".join(f"{lp}\t{w}" for w in ["a", "b", "</s>", "<unk>"])
        (tmp_path / "min.arpa").write_text(f"\\data\\\nngram 1=4\n\n\\1-grams:\n{body}\n\n\\end\\\n")
        m = read_arpa(tmp_path / "min.arpa")
        assert m.order == 1
        assert score_sequence(m, ["a", "b"]) == pytest.approx(3 * lp)
        assert successor_mass(m, ()) == pytest.approx(1.0)
