"""Independent reference implementations used as test oracles.

Written directly from the metric definitions, deliberately without sharing
code with the package.
"""

import math


def sorted_rank(scores, tokens, gold_set, optimistic=True):
    """Sort positions by score (descending) and return the 1-based position of the
    first gold token. Ties: gold first (optimistic) or gold last (pessimistic)."""
    def key(i):
        is_gold = tokens[i] in gold_set
        tiebreak = 0 if is_gold == optimistic else 1
        return (-scores[i], tiebreak)

    order = sorted(range(len(tokens)), key=key)
    for pos, i in enumerate(order, start=1):
        if tokens[i] in gold_set:
            return pos
    return None


def tfidf_by_hand(docs, doc):
    """tf(t, doc) * (ln((1+N)/(1+df(t))) + 1) for each token of ``doc``."""
    n = len(docs)
    out = []
    for t in doc:
        df = sum(1 for d in docs if t in d)
        out.append(doc.count(t) * (math.log((1 + n) / (1 + df)) + 1))
    return out


def cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return dot / (nu * nv)
