"""Temperature schedule, the seeded training loop, and the four-variant ablation runner."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .errors import ConfigError, NumericError, TrainingError, ValidationError
from .evaluation import compare_methods, evaluate
from .model import KeywordModel, ModelConfig, collate, encode_example, extract_dataset
from .optim import AdamState, adam_step
from .text import build_vocab, load_embeddings, tokenize

log = logging.getLogger(__name__)

LOG_HEADER = "iter,tau,L_all,L_a,L_q,L"

ABLATION_ROWS = (
    ("Ours", "none"),
    ("Ours w/o D_q", "no_dq"),
    ("Ours w/o D_a, D_q", "no_da_dq"),
    ("Ours (LSTM D_a, D_q)", "lstm_disc"),
)


@dataclass(frozen=True)
class TemperatureSchedule:
    tau0: float = 0.5
    rate: float = 3.0e-5
    tau_min: float = 0.1

    def __post_init__(self):
        if not (self.tau0 > self.tau_min > 0) or not self.rate > 0:
            raise ConfigError("temperature schedule needs tau0 > tau_min > 0 and rate > 0")

    @classmethod
    def from_model_config(cls, cfg):
        return cls(cfg.tau0, cfg.tau_rate, cfg.tau_min)

    def __call__(self, i):
        return temperature_at(i, self)

    @property
    def crossover(self):
        """Iteration where the exponential reaches tau_min."""
        return math.log(self.tau0 / self.tau_min) / self.rate


def temperature_at(i, schedule=TemperatureSchedule()):
    """max(tau0 * exp(-r * i), tau_min) for optimizer step ``i`` counted across epochs."""
    if i < 0:
        raise ValidationError("iteration must be non-negative")
    return max(schedule.tau0 * math.exp(-schedule.rate * i), schedule.tau_min)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    learning_rate: float = 1e-3
    checkpoint_interval: int = 0
    max_iterations: int = 0

    def validate(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("train.epochs and train.batch_size must be positive")
        if self.checkpoint_interval < 0 or self.max_iterations < 0:
            raise ConfigError("train.checkpoint_interval and train.max_iterations must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("train.learning_rate must be positive")
        return self


@dataclass
class LogRow:
    iteration: int
    tau: float
    l_all: float
    l_a: float
    l_q: float
    total: float
    n_tokens: int = 0

    def line(self):
        return f"{self.iteration},{self.tau!r},{self.l_all!r},{self.l_a!r},{self.l_q!r},{self.total!r}"


@dataclass
class TrainResult:
    model: KeywordModel
    log: list
    initial_params: dict
    checkpoints: list = field(default_factory=list)
    iterations: int = 0


def build_model(train_examples, model_config, seed, embeddings_path=None):
    """Vocabularies from the training split, embeddings, then parameter init from the seeded rng."""
    rng = np.random.default_rng(seed)
    answer_vocab = build_vocab([tokenize(ex.answer) for ex in train_examples])
    question_vocab = build_vocab([tokenize(ex.question) for ex in train_examples])
    a_emb = load_embeddings(embeddings_path, answer_vocab, dim=model_config.d_e, seed=seed)
    q_emb = load_embeddings(embeddings_path, question_vocab, dim=model_config.d_e, seed=seed + 1)
    if embeddings_path is not None:
        log.info("embedding coverage: answers %.3f, questions %.3f", a_emb.coverage, q_emb.coverage)
    model = KeywordModel.initialize(model_config, answer_vocab, question_vocab, rng,
                                    answer_embedding=a_emb.matrix, question_embedding=q_emb.matrix)
    return model, rng


def _checkpoint(model, path, iteration, tau):
    meta = model.meta()
    meta.update({"iteration": iteration, "tau": tau})
    return save_checkpoint(path, model.state_arrays(), meta)


def train(train_examples, features, model_config, train_config, embeddings_path=None, out_dir=None,
          model=None, rng=None):
    """Train with Adam on shuffled mini-batches; one rng drives init, shuffling and dropout.

    Returns a :class:`TrainResult`. With ``out_dir`` the loss log, vocabularies
    and checkpoints are written there.
    """
    train_config.validate()
    model_config.validate()
    if not train_examples:
        raise ValidationError("training set is empty")
    if model is None:
        model, rng = build_model(train_examples, model_config, train_config.seed, embeddings_path)
    elif rng is None:
        raise ValidationError("an rng must accompany a prebuilt model")
    initial = {k: t.data.copy() for k, t in model.params.items()}
    schedule = TemperatureSchedule.from_model_config(model_config)
    encoded = [encode_example(ex, features, model.answer_vocab, model.question_vocab, model_config.max_len)
               for ex in train_examples]
    state = AdamState(learning_rate=train_config.learning_rate)

    out = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        model.answer_vocab.save(out / "vocab_answer.txt")
        model.question_vocab.save(out / "vocab_question.txt")
        log_fh = open(out / "loss_log.csv", "w", encoding="utf-8")
        log_fh.write(LOG_HEADER + "\n")

    rows, ckpts = [], []
    it = 0
    limit = train_config.max_iterations or None
    try:
        for epoch in range(train_config.epochs):
            order = rng.permutation(len(encoded))
            for start in range(0, len(order), train_config.batch_size):
                if limit is not None and it >= limit:
                    break
                batch = collate([encoded[j] for j in order[start:start + train_config.batch_size]])
                tau = schedule(it)
                for p in model.params.values():
                    p.grad = None
                try:
                    res = model.forward(batch, tau, rng=rng)
                    res.total.backward()
                    adam_step(model.params, {k: p.grad for k, p in model.params.items()}, state)
                except NumericError as exc:
                    _dump_failure(out, it, batch, exc)
                    raise TrainingError(f"non-finite value at iteration {it}: {exc}; "
                                        f"batch {batch.example_ids[:8]}...") from exc
                lb = res.losses
                row = LogRow(it, tau, lb.l_all, lb.l_a, lb.l_q, res.total.item(), res.n_tokens)
                rows.append(row)
                if log_fh:
                    log_fh.write(row.line() + "\n")
                it += 1
                if out is not None and train_config.checkpoint_interval and it % train_config.checkpoint_interval == 0:
                    ckpts.append(_checkpoint(model, out / f"checkpoint_{it:07d}.ckpt", it, tau))
            if limit is not None and it >= limit:
                break
            log.info("epoch %d done: iter %d, loss %.4f", epoch + 1, it, rows[-1].total if rows else float("nan"))
    finally:
        if log_fh:
            log_fh.close()
    if out is not None:
        ckpts.append(_checkpoint(model, out / "checkpoint.ckpt", it, schedule(it)))
    return TrainResult(model=model, log=rows, initial_params=initial, checkpoints=ckpts, iterations=it)


def _dump_failure(out, iteration, batch, exc):
    if out is None:
        return
    dump = {"iteration": iteration, "error": str(exc), "example_ids": batch.example_ids,
            "answer_tokens": batch.answer_tokens}
    (out / "nan_dump.json").write_text(json.dumps(dump, indent=1), encoding="utf-8")


# -- ablations ---------------------------------------------------------------------------

@dataclass
class AblationResult:
    rows: list            # ComparisonRow per variant
    runs: dict            # variant label -> list of TrainResult (one per seed)

    def unchanged_params(self, label, prefix):
        """True when every parameter under ``prefix`` still equals its initial value in all runs."""
        for res in self.runs[label]:
            for name, t in res.model.params.items():
                if name.startswith(prefix) and not np.array_equal(t.data, res.initial_params[name]):
                    return False
        return True


def run_ablation_suite(train_examples, eval_examples, features, model_config, train_config,
                       seeds=(0,), embeddings_path=None, out_dir=None):
    """Train the four variants under identical seeds and data, evaluate on ``eval_examples``."""
    runs, extractions = {}, {}
    for label, ablation in ABLATION_ROWS:
        cfg = replace(model_config, ablation=ablation)
        runs[label], extractions[label] = [], []
        for seed in seeds:
            tc = replace(train_config, seed=seed)
            sub = Path(out_dir) / f"{ablation}_seed{seed}" if out_dir is not None else None
            res = train(train_examples, features, cfg, tc, embeddings_path, sub)
            runs[label].append(res)
            extractions[label].append(extract_dataset(res.model, eval_examples, features))
            log.info("%s seed %d: accuracy %s", label, seed,
                     evaluate(eval_examples, extractions[label][-1]).accuracy)
    return AblationResult(compare_methods(eval_examples, extractions), runs)


