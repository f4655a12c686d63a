"""Keyword accuracy, Mean Rank, per-question-type breakdowns and method comparison tables."""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .text import tokenize

log = logging.getLogger(__name__)

TOP_QUESTION_TYPES = 10


@dataclass
class Extraction:
    """One method's output on one example: chosen token and a score per answer token."""
    example_id: str
    token: str
    tokens: list
    scores: list

    def to_json(self):
        return {"example_id": self.example_id, "keyword": self.token, "scores": [float(s) for s in self.scores]}


def gold_tokens(gold):
    return tokenize(gold) if gold else []


def keyword_accuracy(predictions, golds):
    """Fraction of exact matches among examples with a usable gold keyword.

    ``golds`` entries may be ``None`` (skipped). A multi-token gold counts a
    prediction matching any of its tokens as correct. Returns
    ``(accuracy or None, n_evaluated, n_skipped)``.
    """
    if len(predictions) != len(golds):
        raise ValidationError(f"{len(predictions)} predictions vs {len(golds)} gold keywords")
    correct = n = skipped = 0
    for pred, gold in zip(predictions, golds):
        gt = gold_tokens(gold)
        if not gt:
            skipped += 1
            continue
        n += 1
        ptok = tokenize(pred) if pred else []
        correct += bool(ptok) and ptok[0] in gt
    return (correct / n if n else None), n, skipped


def gold_rank(scores, tokens, gold, tie="optimistic"):
    """1-based rank of the best-placed gold token, or ``None`` if the gold is absent.

    optimistic: 1 + #tokens scoring strictly higher;
    pessimistic: 1 + #non-gold tokens scoring at least as high.
    """
    gt = set(gold_tokens(gold))
    gold_pos = [i for i, t in enumerate(tokens) if t in gt]
    if not gold_pos:
        return None
    s = np.asarray(scores, dtype=np.float64)
    g = s[gold_pos].max()
    if tie == "optimistic":
        return 1 + int((s > g).sum())
    if tie == "pessimistic":
        is_gold = np.zeros(len(tokens), dtype=bool)
        is_gold[gold_pos] = True
        return 1 + int(((s >= g) & ~is_gold).sum())
    raise ValidationError(f"unknown tie policy {tie!r}")


def mean_rank(score_lists, token_lists, golds, tie="optimistic"):
    """Average gold rank; examples whose gold is missing are skipped.

    Returns ``(mean or None, n_evaluated, n_skipped)``.
    """
    if not (len(score_lists) == len(token_lists) == len(golds)):
        raise ValidationError("scores, tokens and golds must be aligned")
    ranks = []
    skipped = 0
    for scores, toks, gold in zip(score_lists, token_lists, golds):
        if len(scores) != len(toks):
            raise ValidationError("one score per answer token is required")
        r = gold_rank(scores, toks, gold, tie) if gold else None
        if r is None:
            if gold:
                log.warning("gold keyword %r absent from answer; skipped in Mean Rank", gold)
            skipped += 1
            continue
        ranks.append(r)
    return (float(np.mean(ranks)) if ranks else None), len(ranks), skipped


@dataclass
class EvalReport:
    method: str
    accuracy: float | None
    mean_rank: float | None
    n_evaluated: int
    n_skipped: int
    per_type: dict = field(default_factory=dict)

    def to_json(self):
        return {"method": self.method, "accuracy": self.accuracy, "mean_rank": self.mean_rank,
                "n_evaluated": self.n_evaluated, "n_skipped": self.n_skipped, "per_type": self.per_type}


def _golds(examples):
    return [ex.keyword if ex.evaluable else None for ex in examples]


def evaluate(examples, extractions, method="model", tie="optimistic"):
    """Accuracy and Mean Rank of ``extractions`` (aligned with ``examples``)."""
    if len(examples) != len(extractions):
        raise ValidationError("examples and extractions must be aligned")
    golds = _golds(examples)
    acc, n, skipped = keyword_accuracy([e.token for e in extractions], golds)
    mr, _, _ = mean_rank([e.scores for e in extractions], [e.tokens for e in extractions], golds, tie)
    report = EvalReport(method, acc, mr, n, skipped)
    report.per_type = per_question_type_report(examples, extractions, tie)
    return report


def per_question_type_report(examples, extractions, tie="optimistic", top=TOP_QUESTION_TYPES):
    """Group by question type (first two question words); the ``top`` most frequent
    types get their own row, the remainder is pooled under ``other``."""
    counts = Counter(ex.question_type for ex in examples)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    keep = set(ranked[:top])
    groups = {}
    for ex, ext in zip(examples, extractions):
        key = ex.question_type if ex.question_type in keep else "other"
        groups.setdefault(key, []).append((ex, ext))
    order = [t for t in ranked if t in keep] + (["other"] if "other" in groups else [])
    table = {}
    for key in order:
        exs, exts = zip(*groups[key])
        golds = _golds(exs)
        acc, _, _ = keyword_accuracy([e.token for e in exts], golds)
        mr, _, _ = mean_rank([e.scores for e in exts], [e.tokens for e in exts], golds, tie)
        table[key] = {"count": len(exs), "accuracy": acc, "mean_rank": mr}
    return table


def format_per_type(table, title="question type"):
    lines = [f"{title:<20} {'num.':>7} {'Acc.':>7} {'Mean Rank':>10}"]
    for key, row in table.items():
        lines.append(f"{key:<20} {row['count']:>7,} {_fmt(row['accuracy'], 3):>7} {_fmt(row['mean_rank'], 3):>10}")
    return "\n".join(lines)


def _fmt(v, digits):
    return "--" if v is None else f"{v:.{digits}f}"


# -- comparison table -----------------------------------------------------------------

@dataclass
class ComparisonRow:
    method: str
    reports: list  # one EvalReport per seed; baselines have one

    def _stats(self, attr):
        vals = [getattr(r, attr) for r in self.reports if getattr(r, attr) is not None]
        if not vals:
            return None, None
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
        return float(np.mean(vals)), std

    @property
    def accuracy(self):
        return self._stats("accuracy")

    @property
    def mean_rank(self):
        return self._stats("mean_rank")

    def formatted(self):
        (am, asd), (rm, rsd) = self.accuracy, self.mean_rank
        acc = _fmt(am, 3) if asd is None else f"{am:.3f} ± {asd:.2f}"
        mr = _fmt(rm, 2) if rsd is None else f"{rm:.2f} ± {rsd:.2f}"
        return acc, mr


def compare_methods(examples, method_extractions, tie="optimistic"):
    """Build comparison rows.

    ``method_extractions`` maps a method name to either one list of
    extractions (deterministic method) or a list of such lists (one per seed).
    """
    rows = []
    for name, runs in method_extractions.items():
        if runs and isinstance(runs[0], Extraction):
            runs = [runs]
        rows.append(ComparisonRow(name, [evaluate(examples, run, name, tie) for run in runs]))
    return rows


def format_comparison(rows, dataset="synthetic"):
    width = max([len("Model")] + [len(r.method) for r in rows])
    head = f"{'Model':<{width}}  {'Accuracy (↑)':>16}  {'Mean Rank (↓)':>16}"
    lines = [f"{dataset}", head, "-" * len(head)]
    for r in rows:
        acc, mr = r.formatted()
        lines.append(f"{r.method:<{width}}  {acc:>16}  {mr:>16}")
    return "\n".join(lines)


def comparison_jsonl(rows, dataset="synthetic"):
    out = []
    for r in rows:
        (am, asd), (rm, rsd) = r.accuracy, r.mean_rank
        out.append(json.dumps({
            "dataset": dataset, "method": r.method, "n_runs": len(r.reports),
            "accuracy": am, "accuracy_std": asd, "mean_rank": rm, "mean_rank_std": rsd,
            "n_evaluated": r.reports[0].n_evaluated, "n_skipped": r.reports[0].n_skipped,
        }, sort_keys=True))
    return "\n".join(out) + ("\n" if out else "")
