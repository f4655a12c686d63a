"""Deterministic unsupervised baselines: TF-IDF and an EmbedRank-style cosine ranker."""

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ExtractionError, FormatError, ValidationError
from .evaluation import Extraction


@dataclass
class IdfTable:
    idf: dict
    n_docs: int

    def __getitem__(self, token):
        # unseen tokens behave as df = 0
        return self.idf.get(token, math.log(1 + self.n_docs) + 1.0)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# n_docs={self.n_docs}\n")
            for tok in sorted(self.idf):
                fh.write(f"{tok}\t{self.idf[tok]!r}\n")

    @classmethod
    def load(cls, path):
        idf, n_docs = {}, None
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if line.startswith("# n_docs="):
                n_docs = int(line.split("=", 1)[1])
                continue
            if not line.strip():
                continue
            tok, _, val = line.partition("\t")
            try:
                idf[tok] = float(val)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad idf value {val!r}") from None
        if n_docs is None:
            raise FormatError(f"{path}: missing '# n_docs=' header")
        return cls(idf, n_docs)


def build_idf(corpus):
    """Smoothed idf: ln((1 + N) / (1 + df)) + 1 over tokenized answers."""
    corpus = list(corpus)
    if not corpus:
        raise ValidationError("cannot build idf from an empty corpus")
    df = Counter(t for doc in corpus for t in set(doc))
    n = len(corpus)
    return IdfTable({t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}, n)


def tfidf_scores(tokens, idf):
    tf = Counter(tokens)
    return [tf[t] * idf[t] for t in tokens]


def _first_argmax(scores):
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


def tfidf_extract(tokens, idf):
    """Highest tf*idf token (first occurrence on ties) and the per-token scores."""
    if not tokens:
        raise ExtractionError("empty answer")
    scores = tfidf_scores(tokens, idf)
    return tokens[_first_argmax(scores)], scores


def embedrank_extract(tokens, embeddings):
    """Cosine between each token embedding and the mean in-vocabulary embedding.

    ``embeddings`` maps token -> vector. Out-of-vocabulary tokens score -1.
    """
    if not tokens:
        raise ExtractionError("empty answer")
    vecs = [embeddings.get(t) for t in tokens]
    known = [np.asarray(v, dtype=np.float64) for v in vecs if v is not None]
    if not known:
        raise ExtractionError("every answer token is out of vocabulary")
    sentence = np.mean(known, axis=0)
    s_norm = np.linalg.norm(sentence)
    scores = []
    for v in vecs:
        if v is None:
            scores.append(-1.0)
            continue
        v = np.asarray(v, dtype=np.float64)
        denom = np.linalg.norm(v) * s_norm
        scores.append(float(np.clip(v @ sentence / denom, -1.0, 1.0)) if denom > 0 else 0.0)
    return tokens[_first_argmax(scores)], scores


def run_tfidf(examples, idf):
    out = []
    for ex in examples:
        toks = ex.answer_tokens
        tok, scores = tfidf_extract(toks, idf)
        out.append(Extraction(ex.example_id, tok, toks, scores))
    return out


def run_embedrank(examples, embeddings):
    out = []
    for ex in examples:
        toks = ex.answer_tokens
        tok, scores = embedrank_extract(toks, embeddings)
        out.append(Extraction(ex.example_id, tok, toks, scores))
    return out
