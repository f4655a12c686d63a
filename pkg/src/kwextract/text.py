"""Tokenization, vocabularies, bag-of-words features and word-embedding tables."""

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParseError, ValidationError

log = logging.getLogger(__name__)

PUNCTUATION = ".,?!"
_STRIP = str.maketrans("", "", PUNCTUATION)

PAD, UNK, BOS, EOS, MASK = range(5)
SPECIAL_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>", "<mask>")

DEFAULT_MAX_LEN = 32
EMBED_INIT_RANGE = 0.1


def tokenize(text):
    """Lowercase, delete . , ? ! and split on whitespace."""
    return text.lower().translate(_STRIP).split()


class Vocabulary:
    """Token <-> id mapping with the five special ids fixed at 0..4."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            tokens = list(SPECIAL_TOKENS) + [t for t in tokens if t not in SPECIAL_TOKENS]
        if len(set(tokens)) != len(tokens):
            raise ValidationError("duplicate tokens in vocabulary")
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def lookup(self, token):
        return self.stoi.get(token, UNK)

    def encode(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids):
        return [self.itos[i] for i in ids]

    def save(self, path):
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        tokens = Path(path).read_text(encoding="utf-8").split("\n")
        if tokens and tokens[-1] == "":
            tokens.pop()
        if tuple(tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise FormatError(f"{path}: vocabulary file must start with the special tokens")
        return cls(tokens)


def build_vocab(corpus, min_count=1):
    """Ids ordered by (frequency desc, token asc); rarer tokens fall back to UNK."""
    corpus = list(corpus)
    if not corpus or not any(corpus):
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    counts = Counter(t for sent in corpus for t in sent if t not in SPECIAL_TOKENS)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(list(SPECIAL_TOKENS) + kept)


def bow_featurize(tokens, vocab):
    """Vector of N_i / L_s over the vocabulary; OOV tokens count towards UNK."""
    if not tokens:
        raise ValidationError("bag-of-words of an empty sentence is undefined")
    b = np.zeros(len(vocab))
    np.add.at(b, vocab.encode(tokens), 1.0)
    return b / len(tokens)


def truncate(tokens, max_len=DEFAULT_MAX_LEN):
    if len(tokens) > max_len:
        log.warning("truncating %d-token sentence to max_len=%d", len(tokens), max_len)
        return tokens[:max_len]
    return tokens


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    coverage: float = 0.0
    trainable: bool = True

    @property
    def dim(self):
        return self.matrix.shape[1]


def read_embedding_file(path, dim=None):
    """Parse a GloVe-style text file into ``{token: vector}``.

    A line whose float count differs from the first line's is a ``ParseError``
    at that line; a consistent dimension different from ``dim`` is a
    ``FormatError``.
    """
    vectors = {}
    file_dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if not values:
                raise ParseError("no vector values after token", line=lineno, path=path)
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise ParseError(f"non-numeric value: {exc}", line=lineno, path=path) from None
            if file_dim is None:
                file_dim = len(vec)
                if dim is not None and file_dim != dim:
                    raise FormatError(f"{path}: embeddings have dimension {file_dim}, expected {dim}")
            elif len(vec) != file_dim:
                raise ParseError(f"expected {file_dim} values, found {len(vec)}", line=lineno, path=path)
            if not np.isfinite(vec).all():
                raise ParseError("non-finite value", line=lineno, path=path)
            vectors[token] = vec
    return vectors


def load_embeddings(path, vocab, dim=300, seed=0):
    """Build a [len(vocab) x dim] table from a pretrained file.

    Rows for tokens in the file are copied; every other row (specials included)
    keeps its uniform(-0.1, 0.1) draw from ``seed``. ``path=None`` gives a purely
    random table.
    """
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE, size=(len(vocab), dim))
    found = 0
    if path is not None:
        vectors = read_embedding_file(path, dim=dim)
        for token, idx in vocab.stoi.items():
            vec = vectors.get(token)
            if vec is not None:
                matrix[idx] = vec
                found += 1
    coverage = found / len(vocab)
    return EmbeddingTable(matrix=matrix, coverage=coverage)


def write_embedding_file(path, vectors):
    with open(path, "w", encoding="utf-8") as fh:
        for token, vec in vectors.items():
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def init_positional(rng, max_len, dim, std=0.02):
    """Learned positional table, BERT-style small normal init."""
    return rng.normal(0.0, std, size=(max_len, dim))
