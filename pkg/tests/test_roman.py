import pytest
from hypothesis import given, strategies as st

from hybridlid.errors import DataError
from hybridlid.roman import (
    DEFAULT_SYMBOLS,
    UROMAN_ALPHABET,
    RomanMap,
    build_lexicon,
    builtin_roman_map,
    drop_rate,
    read_lexicon,
    read_roman_map,
    romanize,
    write_lexicon,
    write_roman_map,
)

IDENTITY = RomanMap(())
BUILTIN = builtin_roman_map()


def test_inventory_has_38_symbols():
    assert len(DEFAULT_SYMBOLS) == 38
    assert DEFAULT_SYMBOLS[0] == "<blank>"


def test_identity_on_latin():
    assert romanize("privet", IDENTITY) == "privet"


def test_table_lookup():
    assert romanize("ü", RomanMap((("ü", "u"),))) == "u"


def test_longest_match_wins():
    rmap = RomanMap((("щ", "shch"), ("ш", "sh"), ("шщ", "x")))
    assert romanize("шщщ", rmap) == "xshch"


def test_drop_report():
    out, dropped = IDENTITY.apply("a☃b☃")
    assert out == "ab"
    assert dropped["☃"] == 2


def test_builtin_tables():
    assert romanize("café", BUILTIN) == "cafe"
    assert romanize("Привет", BUILTIN) == "privet"
    assert romanize("Straße", BUILTIN) == "strasse"
    x = "café"
    assert romanize(romanize(x, BUILTIN), BUILTIN) == romanize(x, BUILTIN)


def test_rule_emitting_outside_alphabet_rejected():
    with pytest.raises(DataError):
        RomanMap((("ü", "U"),))


def test_rule_rewriting_alphabet_text_rejected():
    with pytest.raises(DataError):
        RomanMap((("ts", "c"),))


@given(st.text(max_size=40))
def test_closure_and_idempotence(text):
    once = romanize(text, BUILTIN)
    assert set(once) <= set(UROMAN_ALPHABET)
    assert romanize(once, BUILTIN) == once


def test_drop_rate_warns(caplog):
    assert drop_rate(["☃☃☃a"], IDENTITY) == pytest.approx(0.75)
    assert "dropped" in caplog.text


def test_map_file_roundtrip(tmp_path):
    write_roman_map(BUILTIN, tmp_path / "m.tsv")
    back = read_roman_map(tmp_path / "m.tsv")
    assert back == BUILTIN


class TestLexicon:
    def test_identity_spellings(self):
        lex = build_lexicon(["ab", "c"], IDENTITY, "xx")
        assert dict(lex.entries) == {"ab": ("a", "b"), "c": ("c",)}

    def test_table_spelling(self):
        lex = build_lexicon(["дa"], RomanMap((("д", "d"),)), "xx")
        assert dict(lex.entries) == {"дa": ("d", "a")}

    def test_all_empty_is_error(self):
        with pytest.raises(DataError, match="empty"):
            build_lexicon(["☃"], IDENTITY, "xx")

    def test_excluded_tokens_reported(self):
        lex = build_lexicon(["▁", "▁ab", "c"], IDENTITY, "xx")
        assert lex.excluded == ("▁",)
        assert set(lex.entries) == {"▁ab", "c"}

    @given(st.lists(st.text(min_size=1, max_size=5), min_size=1, max_size=10))
    def test_keys_subset_of_vocab(self, tokens):
        try:
            lex = build_lexicon(tokens, BUILTIN, "xx")
        except DataError:
            return
        assert set(lex.entries) <= set(tokens)
        assert set(lex.entries) | set(lex.excluded) == set(tokens)
        assert lex.symbols() <= set(UROMAN_ALPHABET)

    def test_file_roundtrip(self, tmp_path):
        lex = build_lexicon(["ab", "c", "шa"], BUILTIN, "xx")
        write_lexicon(lex, tmp_path / "lex.tsv")
        assert (tmp_path / "lex.tsv").read_text(encoding="utf-8").splitlines()[0] == "ab\ta b"
        back = read_lexicon(tmp_path / "lex.tsv", "xx", DEFAULT_SYMBOLS)
        assert back.entries == lex.entries

    def test_read_rejects_foreign_symbols(self, tmp_path):
        (tmp_path / "lex.tsv").write_text("ab\ta B\n", encoding="utf-8")
        with pytest.raises(DataError, match="line 1"):
            read_lexicon(tmp_path / "lex.tsv", "xx", DEFAULT_SYMBOLS)
