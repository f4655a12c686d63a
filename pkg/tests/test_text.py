import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kwextract.errors import FormatError, ParseError, ValidationError
from kwextract.text import (
    EOS, MASK, PAD, SPECIAL_TOKENS, UNK, Vocabulary, bow_featurize, build_vocab, load_embeddings,
    read_embedding_file, tokenize, truncate, write_embedding_file,
)

words = st.text(alphabet="abcdefgh.,?! ", max_size=40)


class TestTokenize:
    def test_question(self):
        assert tokenize("Is the cat black?") == ["is", "the", "cat", "black"]

    def test_empty(self):
        assert tokenize("") == []

    def test_long_sentence(self):
        toks = tokenize("The egg shaped ghost candles are in front of the bear.")
        assert len(toks) == 11 and toks[-1] == "bear"

    def test_exclamation_and_comma(self):
        assert tokenize("Yes, a DOG!") == ["yes", "a", "dog"]

    @settings(max_examples=100, deadline=None)
    @given(words)
    def test_idempotent(self, s):
        assert tokenize(" ".join(tokenize(s))) == tokenize(s)


class TestVocabulary:
    def test_specials_fixed(self):
        v = build_vocab([["a"]])
        assert v.itos[:5] == list(SPECIAL_TOKENS)
        assert (PAD, UNK, EOS, MASK) == (0, 1, 3, 4)

    def test_counts(self):
        v = build_vocab([["a", "b", "a"]], min_count=1)
        assert len(v) == 7 and "a" in v and "b" in v

    def test_min_count(self):
        v = build_vocab([["a", "b", "a"]], min_count=2)
        assert "a" in v and "b" not in v and v.lookup("b") == UNK

    def test_ties_lexicographic(self):
        v = build_vocab([["zeta", "alpha", "mid"]])
        assert v.itos[5:] == ["alpha", "mid", "zeta"]

    def test_unknown_lookup(self):
        assert build_vocab([["a"]]).lookup("never") == UNK

    def test_save_load(self, tmp_path):
        v = build_vocab([["x", "y", "y"]])
        v.save(tmp_path / "v.txt")
        assert Vocabulary.load(tmp_path / "v.txt") == v

    def test_load_rejects_missing_specials(self, tmp_path):
        (tmp_path / "v.txt").write_text("a\nb\n")
        with pytest.raises(FormatError):
            Vocabulary.load(tmp_path / "v.txt")

    def test_empty_corpus(self):
        with pytest.raises(ValidationError):
            build_vocab([])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=6), min_size=1, max_size=6))
    def test_deterministic_and_bijective(self, corpus):
        v1, v2 = build_vocab(corpus), build_vocab([list(s) for s in corpus])
        assert v1.itos == v2.itos
        assert all(v1.stoi[t] == i for i, t in enumerate(v1.itos))


class TestBow:
    def test_counting(self):
        v = build_vocab([["the", "cat", "sat"]])
        b = bow_featurize(["the", "cat", "sat", "the"], v)
        assert b[v.lookup("the")] == 0.5 and b[v.lookup("cat")] == 0.25 and b[v.lookup("sat")] == 0.25

    def test_single_token(self):
        v = build_vocab([["cat"]])
        b = bow_featurize(["cat"], v)
        assert b[v.lookup("cat")] == 1.0 and b.sum() == 1.0

    def test_all_oov(self):
        v = build_vocab([["cat"]])
        b = bow_featurize(["dog", "emu"], v)
        assert b[UNK] == 1.0

    def test_empty_is_error(self):
        with pytest.raises(ValidationError):
            bow_featurize([], build_vocab([["a"]]))

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.sampled_from(["a", "b", "c", "zz", "qq"]), min_size=1, max_size=30))
    def test_sums_to_one(self, toks):
        b = bow_featurize(toks, build_vocab([["a", "b", "c"]]))
        assert np.all(b >= 0) and abs(b.sum() - 1.0) <= 1e-9


class TestEmbeddings:
    def test_passthrough(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("cat 0.1 0.2 0.3\n")
        table = load_embeddings(p, build_vocab([["cat", "dog"]]), dim=3)
        v = build_vocab([["cat", "dog"]])
        np.testing.assert_array_equal(table.matrix[v.lookup("cat")], [0.1, 0.2, 0.3])
        assert table.coverage == pytest.approx(1 / 7)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("")
        table = load_embeddings(p, build_vocab([["cat"]]), dim=4, seed=3)
        assert table.coverage == 0.0
        assert np.abs(table.matrix).max() <= 0.1

    def test_wrong_float_count_names_line(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("cat 0.1 0.2 0.3\ndog 0.1 0.2\n")
        with pytest.raises(ParseError) as err:
            read_embedding_file(p)
        assert err.value.line == 2 and ":2" in str(err.value)

    def test_dimension_mismatch(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("cat 0.1 0.2 0.3\n")
        with pytest.raises(FormatError):
            load_embeddings(p, build_vocab([["cat"]]), dim=300)

    def test_reproducible(self, tmp_path):
        p = tmp_path / "e.txt"
        write_embedding_file(p, {"cat": np.array([0.5, -0.25])})
        v = build_vocab([["cat", "dog", "emu"]])
        a = load_embeddings(p, v, dim=2, seed=11).matrix
        b = load_embeddings(p, v, dim=2, seed=11).matrix
        assert a.tobytes() == b.tobytes()

    def test_write_read_round_trip(self, tmp_path):
        vecs = {"a": np.array([1 / 3, -2.5e-7]), "b": np.array([np.pi, 0.0])}
        write_embedding_file(tmp_path / "e.txt", vecs)
        back = read_embedding_file(tmp_path / "e.txt")
        for k in vecs:
            assert back[k].tobytes() == vecs[k].tobytes()


def test_truncate_warns(caplog):
    with caplog.at_level("WARNING"):
        assert truncate(list("abcdef"), 4) == list("abcd")
    assert "truncating" in caplog.text
    assert truncate(["a"], 4) == ["a"]
