import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kwextract.baselines import IdfTable, build_idf, embedrank_extract, tfidf_extract, tfidf_scores
from kwextract.errors import ExtractionError, FormatError, ValidationError
from oracles import cosine, tfidf_by_hand

DOCS = [["the", "red", "car", "is", "fast"], ["the", "car", "is", "blue"], ["a", "red", "kite", "the", "kite"]]


class TestIdf:
    def test_ubiquitous(self):
        assert build_idf(DOCS)["the"] == 1.0

    def test_single_document(self):
        idf = build_idf([["x", "y", "x"]])
        assert idf["x"] == idf["y"] == 1.0

    def test_three_docs_df_one(self):
        assert build_idf(DOCS)["fast"] == pytest.approx(math.log(2) + 1, abs=1e-12)
        assert build_idf(DOCS)["fast"] == pytest.approx(1.6931, abs=1e-4)

    def test_unseen_token(self):
        assert build_idf(DOCS)["zebra"] == pytest.approx(math.log(4) + 1)

    def test_empty(self):
        with pytest.raises(ValidationError):
            build_idf([])

    def test_save_load(self, tmp_path):
        idf = build_idf(DOCS)
        idf.save(tmp_path / "idf.tsv")
        back = IdfTable.load(tmp_path / "idf.tsv")
        assert back == idf

    def test_load_errors(self, tmp_path):
        (tmp_path / "a.tsv").write_text("x\t1.0\n")
        with pytest.raises(FormatError):
            IdfTable.load(tmp_path / "a.tsv")
        (tmp_path / "b.tsv").write_text("# n_docs=2\nx\tnope\n")
        with pytest.raises(FormatError):
            IdfTable.load(tmp_path / "b.tsv")

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.sampled_from("abcde"), min_size=1, max_size=5), min_size=1, max_size=6))
    def test_non_negative(self, docs):
        assert all(v >= 1.0 for v in build_idf(docs).idf.values())


class TestTfidf:
    def test_rare_token_wins(self):
        idf = build_idf([["the", "a", "x"], ["the", "a"], ["the", "a"]])
        assert tfidf_extract(["the", "x", "a"], idf)[0] == "x"

    def test_repeated_token_wins(self):
        idf = build_idf([["p", "q", "r"]])
        assert tfidf_extract(["p", "q", "q", "r"], idf)[0] == "q"

    @pytest.mark.parametrize("k", range(3))
    def test_hand_oracle(self, k):
        _, scores = tfidf_extract(DOCS[k], build_idf(DOCS))
        np.testing.assert_allclose(scores, tfidf_by_hand(DOCS, DOCS[k]), rtol=0, atol=1e-12)

    def test_hand_values(self):
        # "kite": tf 2, df 1 -> 2 * (ln 2 + 1); "red": tf 1, df 2 -> ln(4/3) + 1
        scores = dict(zip(DOCS[2], tfidf_scores(DOCS[2], build_idf(DOCS))))
        assert scores["kite"] == pytest.approx(2 * (math.log(2) + 1), abs=1e-12)
        assert scores["red"] == pytest.approx(math.log(4 / 3) + 1, abs=1e-12)

    def test_empty_answer(self):
        with pytest.raises(ExtractionError):
            tfidf_extract([], build_idf(DOCS))

    @settings(max_examples=50, deadline=None)
    @given(st.permutations(DOCS[0] + ["kite"]))
    def test_argmax_set_permutation_invariant(self, perm):
        idf = build_idf(DOCS)
        scores = dict(zip(perm, tfidf_scores(perm, idf)))
        best = max(scores.values())
        ref = dict(zip(DOCS[0] + ["kite"], tfidf_scores(DOCS[0] + ["kite"], idf)))
        assert {t for t, s in scores.items() if s == best} == {t for t, s in ref.items() if s == max(ref.values())}


class TestEmbedRank:
    def test_single_token(self):
        tok, scores = embedrank_extract(["cat"], {"cat": np.array([0.3, -2.0])})
        assert tok == "cat" and scores == [pytest.approx(1.0)]

    def test_orthogonal_pair(self):
        tok, scores = embedrank_extract(["a", "b"], {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0])})
        assert tok == "a"
        np.testing.assert_allclose(scores, [1 / math.sqrt(2)] * 2, rtol=1e-12)

    def test_majority_wins(self):
        emb = {"a": np.array([1.0, 0.2, 0.0]), "b": np.array([0.0, 1.0, 0.5])}
        assert embedrank_extract(["b", "a", "a", "a"], emb)[0] == "a"

    def test_oov_scores_minus_one(self):
        _, scores = embedrank_extract(["a", "zz"], {"a": np.array([1.0, 2.0])})
        assert scores[1] == -1.0

    def test_all_oov(self):
        with pytest.raises(ExtractionError):
            embedrank_extract(["zz"], {"a": np.array([1.0])})

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=7), st.integers(0, 10_000),
           st.floats(0.01, 100))
    def test_cosine_oracle_range_and_scale(self, toks, seed, scale):
        rng = np.random.default_rng(seed)
        emb = {t: rng.normal(size=5) for t in "abcd"}
        _, scores = embedrank_extract(toks, emb)
        mean = np.mean([emb[t] for t in toks], axis=0)
        if np.linalg.norm(mean) < 1e-9:
            return
        for t, s in zip(toks, scores):
            assert -1.0 <= s <= 1.0
            assert s == pytest.approx(cosine(emb[t], mean), abs=1e-12)
        _, scaled = embedrank_extract(toks, {t: v * scale for t, v in emb.items()})
        np.testing.assert_allclose(scaled, scores, atol=1e-12)
