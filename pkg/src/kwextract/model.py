"""
Keyword-extraction network.

A frozen encoder turns (image feature, question) into a joint vector. Two
attention scorers read the answer: the keyword scorer selects one word through
a temperature softmax, the question scorer pools with a plain softmax. An LSTM
decoder rebuilds the whole answer from both pooled vectors, while two
discriminative decoders predict the answer and question bags of words from
one pooled vector each plus an auxiliary vector (question mean embedding for
the answer side, image feature for the question side).

All forward functions are batched: leading dimension B, answers padded to a
common length with a validity mask.
"""

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .errors import ConfigError, ValidationError
from .nn import init_linear, init_lstm, lstm_cell_step
from .text import EOS, MASK, PAD, Vocabulary, bow_featurize, init_positional, tokenize

log = logging.getLogger(__name__)

ABLATIONS = ("none", "no_dq", "no_da_dq", "lstm_disc")


@dataclass
class ModelConfig:
    d_img: int = 2048
    d_e: int = 300
    attn_hidden: int = 512
    lstm_hidden: int = 1024
    lambda_all: float = 1.0
    lambda_a: float = 1.0
    lambda_q: float = 1.0
    word_dropout: float = 0.25
    tau0: float = 0.5
    tau_rate: float = 3.0e-5
    tau_min: float = 0.1
    max_len: int = 32
    ablation: str = "none"

    def validate(self):
        for name in ("d_img", "d_e", "attn_hidden", "lstm_hidden", "max_len"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"model.{name} must be positive")
        if self.d_e < 2:
            raise ConfigError("model.d_e must be at least 2 (layer normalization)")
        lams = (self.lambda_all, self.lambda_a, self.lambda_q)
        if min(lams) < 0:
            raise ConfigError("loss weights must be non-negative")
        if max(lams) == 0:
            raise ConfigError("at least one loss weight must be positive")
        if not 0.0 <= self.word_dropout <= 1.0:
            raise ConfigError("model.word_dropout must lie in [0, 1]")
        if not self.tau0 > self.tau_min > 0 or not self.tau_rate > 0:
            raise ConfigError("temperature schedule needs tau0 > tau_min > 0 and tau_rate > 0")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"model.ablation must be one of {ABLATIONS}")
        return self

    @property
    def d_j(self):
        return self.d_img + self.d_e

    @property
    def uses_da(self):
        return self.ablation != "no_da_dq" and self.lambda_a > 0

    @property
    def uses_dq(self):
        return self.ablation not in ("no_dq", "no_da_dq") and self.lambda_q > 0

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class LossBreakdown:
    l_all: float
    l_a: float
    l_q: float
    lambda_all: float = 1.0
    lambda_a: float = 1.0
    lambda_q: float = 1.0

    @property
    def total(self):
        return total_loss(self)


def total_loss(parts):
    """Weighted objective; accepts floats or tensors for the three components."""
    lams = (parts.lambda_all, parts.lambda_a, parts.lambda_q)
    if min(lams) < 0:
        raise ConfigError("loss weights must be non-negative")
    if max(lams) == 0:
        raise ConfigError("at least one loss weight must be positive")
    return parts.lambda_all * parts.l_all + parts.lambda_a * parts.l_a + parts.lambda_q * parts.l_q


# -- encoder -------------------------------------------------------------------

@dataclass
class EncoderOutput:
    f_img: np.ndarray
    f_ques: np.ndarray

    @property
    def f_joint(self):
        return np.concatenate([self.f_img, self.f_ques], axis=-1)


def _unit(v, what):
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValidationError(f"{what} is the zero vector")
    return v / norm


def encode(image_feature, question_ids, question_embedding, question_mask=None):
    """Frozen encoder: unit image vector, unit mean question embedding.

    Works on one example (``question_ids`` 1-D) or a padded batch (2-D with
    ``question_mask``). Nothing here is differentiated.
    """
    image_feature = np.asarray(image_feature, dtype=np.float64)
    ids = np.asarray(question_ids, dtype=np.int64)
    if ids.size == 0 or ids.shape[-1] == 0:
        raise ValidationError("question is empty")
    emb = question_embedding[ids]
    if question_mask is None:
        question_mask = np.ones(ids.shape, dtype=bool)
    mask = np.asarray(question_mask, dtype=np.float64)
    counts = mask.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ValidationError("question is empty")
    mean_emb = (emb * mask[..., None]).sum(axis=-2) / counts
    return EncoderOutput(f_img=_unit(image_feature, "image feature"), f_ques=_unit(mean_emb, "question embedding mean"))


# -- attention scoring -----------------------------------------------------------

def attention_score(f_joint, f_answer, params, prefix):
    """Raw scores ``a = K^T Q`` (no 1/sqrt(h) scaling) and values ``V``.

    ``f_joint`` [B, d_j], ``f_answer`` [B, n, d_e] -> scores [B, n], V [B, n, h].
    """
    q = T.linear(f_joint, params[f"{prefix}.q.weight"], params[f"{prefix}.q.bias"])
    k = T.linear(f_answer, params[f"{prefix}.k.weight"], params[f"{prefix}.k.bias"])
    v = T.linear(f_answer, params[f"{prefix}.v.weight"], params[f"{prefix}.v.bias"])
    b, h = q.shape
    scores = T.reshape(T.matmul(k, T.reshape(q, (b, h, 1))), (b, k.shape[1]))
    return scores, v


def pool(weights, values):
    """``V @ weights`` per example: [B, n] x [B, n, h] -> [B, h]."""
    b, n = weights.shape
    return T.reshape(T.matmul(T.reshape(weights, (b, 1, n)), values), (b, values.shape[-1]))


def select_keyword_soft(scores, values, tau, mask=None):
    """Differentiable stand-in for picking the top-scoring value column."""
    return pool(T.softmax(scores, tau=tau, mask=mask), values)


def question_vector(scores, values, mask=None):
    return pool(T.softmax(scores, tau=1.0, mask=mask), values)


def project_output(raw, params, prefix):
    out = T.linear(raw, params[f"{prefix}.out.weight"], params[f"{prefix}.out.bias"])
    return T.layer_norm(out, params[f"{prefix}.ln.gain"], params[f"{prefix}.ln.bias"])


def project_outputs(f_k_raw, f_q_raw, params):
    return project_output(f_k_raw, params, "s_a"), project_output(f_q_raw, params, "s_q")


# -- decoders ----------------------------------------------------------------------

def apply_word_dropout(ids, rate, rng, valid=None):
    """Replace each valid input id by MASK with probability ``rate``."""
    ids = np.asarray(ids, dtype=np.int64)
    if rate <= 0:
        return ids.copy()
    draws = rng.random(ids.shape)
    drop = draws < rate
    if valid is not None:
        drop &= np.asarray(valid, dtype=bool)
    return np.where(drop, MASK, ids)


def sequence_decoder_loss(cond, target_ids, target_mask, params, prefix, word_dropout=0.0,
                          rng=None, hook=None):
    """Teacher-forced LSTM reconstruction loss, summed over positions, one value per example.

    Step 0 is fed ``W_x0 @ cond``; step t >= 1 is fed ``W_x @ [cond; emb(token_t)]``
    where the token may be replaced by MASK (word dropout). Targets are the
    sentence followed by EOS. ``target_ids`` is [B, L] padded with PAD.
    """
    ids = np.asarray(target_ids, dtype=np.int64)
    valid = np.asarray(target_mask, dtype=bool)
    if not valid[:, 0].all():
        raise ValidationError("cannot reconstruct an empty sentence")
    b, length = ids.shape
    lengths = valid.sum(axis=1)

    inputs = ids
    if word_dropout > 0:
        if rng is None:
            raise ValidationError("word dropout needs an rng")
        inputs = apply_word_dropout(ids, word_dropout, rng, valid)
    if hook is not None:
        hook(inputs.copy())

    targets = np.full((b, length + 1), PAD, dtype=np.int64)
    targets[:, :length] = np.where(valid, ids, PAD)
    targets[np.arange(b), lengths] = EOS
    tmask = np.arange(length + 1)[None, :] <= lengths[:, None]

    hidden = params[f"{prefix}.lstm.w_hh"].shape[1]
    x0 = T.linear(cond, params[f"{prefix}.x0.weight"])
    tok = T.take_rows(params[f"{prefix}.embedding"], inputs)
    cond_rep = T.broadcast_to(T.reshape(cond, (b, 1, cond.shape[-1])), (b, length, cond.shape[-1]))
    xs = T.linear(T.concat([cond_rep, tok], axis=-1), params[f"{prefix}.x.weight"])

    h = T.Tensor(np.zeros((b, hidden)))
    c = T.Tensor(np.zeros((b, hidden)))
    w_ih, w_hh, bias = (params[f"{prefix}.lstm.{n}"] for n in ("w_ih", "w_hh", "bias"))
    outs = []
    for t in range(length + 1):
        x = x0 if t == 0 else xs[:, t - 1, :]
        h, c = lstm_cell_step(x, h, c, w_ih, w_hh, bias)
        outs.append(h)
    hs = T.stack(outs, axis=1)
    logits = T.linear(hs, params[f"{prefix}.out.weight"], params[f"{prefix}.out.bias"])
    nll = T.token_cross_entropy(logits, targets)
    return T.tsum(nll * tmask.astype(np.float64), axis=1), int(tmask.sum())


def entire_decoder_loss(f_k, f_q, answer_ids, answer_mask, params, word_dropout, rng, hook=None):
    """Answer reconstruction from both pooled vectors; returns (loss per example, token count)."""
    return sequence_decoder_loss(T.concat([f_k, f_q], axis=-1), answer_ids, answer_mask, params,
                                 "d_all", word_dropout, rng, hook)


def discriminative_losses(f_k, f_q, f_ques, f_img, bow_answer, bow_question, params, config,
                          answer=None, question=None, rng=None):
    """Per-example (L_a, L_q); a disabled component is ``None``.

    BoW mode: linear logits over each vocabulary against the BoW target.
    ``lstm_disc`` mode: sequence reconstruction of the answer / question, which
    needs ``answer=(ids, mask)`` and ``question=(ids, mask)``.
    """
    l_a = l_q = None
    cond_a = T.concat([f_k, T.as_tensor(f_ques)], axis=-1) if config.uses_da else None
    cond_q = T.concat([f_q, T.as_tensor(f_img)], axis=-1) if config.uses_dq else None
    if config.ablation == "lstm_disc":
        if cond_a is not None:
            l_a, _ = sequence_decoder_loss(cond_a, *answer, params, "d_a_lstm", config.word_dropout, rng)
        if cond_q is not None:
            l_q, _ = sequence_decoder_loss(cond_q, *question, params, "d_q_lstm", config.word_dropout, rng)
        return l_a, l_q
    if cond_a is not None:
        l_a = T.cross_entropy(T.linear(cond_a, params["d_a.weight"], params["d_a.bias"]), bow_answer)
    if cond_q is not None:
        l_q = T.cross_entropy(T.linear(cond_q, params["d_q.weight"], params["d_q.bias"]), bow_question)
    return l_a, l_q


# -- batching ------------------------------------------------------------------------

@dataclass
class Batch:
    example_ids: list
    image: np.ndarray         # [B, d_img]
    question_ids: np.ndarray  # [B, Lq]
    question_mask: np.ndarray
    answer_ids: np.ndarray    # [B, La]
    answer_mask: np.ndarray
    bow_answer: np.ndarray    # [B, n_a]
    bow_question: np.ndarray  # [B, n_q]
    answer_tokens: list

    def __len__(self):
        return len(self.example_ids)


def _pad(seqs):
    length = max(len(s) for s in seqs)
    ids = np.full((len(seqs), length), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), length), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


@dataclass
class EncodedExample:
    example_id: str
    image: np.ndarray
    question_ids: list
    answer_ids: list
    answer_tokens: list
    bow_answer: np.ndarray
    bow_question: np.ndarray


def encode_example(example, features, answer_vocab, question_vocab, max_len):
    a_tok = tokenize(example.answer)
    q_tok = tokenize(example.question)
    if not a_tok:
        raise ValidationError(f"example {example.example_id}: empty answer")
    if not q_tok:
        raise ValidationError(f"example {example.example_id}: empty question")
    if len(a_tok) > max_len:
        log.warning("example %s: answer of %d tokens truncated to %d", example.example_id, len(a_tok), max_len)
        a_tok = a_tok[:max_len]
    image = features[example.image_id]
    return EncodedExample(
        example_id=example.example_id, image=np.asarray(image, dtype=np.float64),
        question_ids=question_vocab.encode(q_tok), answer_ids=answer_vocab.encode(a_tok),
        answer_tokens=a_tok,
        bow_answer=bow_featurize(a_tok, answer_vocab), bow_question=bow_featurize(q_tok, question_vocab),
    )


def collate(encoded):
    q_ids, q_mask = _pad([e.question_ids for e in encoded])
    a_ids, a_mask = _pad([e.answer_ids for e in encoded])
    return Batch(
        example_ids=[e.example_id for e in encoded],
        image=np.stack([e.image for e in encoded]),
        question_ids=q_ids, question_mask=q_mask, answer_ids=a_ids, answer_mask=a_mask,
        bow_answer=np.stack([e.bow_answer for e in encoded]),
        bow_question=np.stack([e.bow_question for e in encoded]),
        answer_tokens=[e.answer_tokens for e in encoded],
    )


# -- the model ---------------------------------------------------------------------------

@dataclass
class ForwardResult:
    losses: LossBreakdown
    total: T.Tensor
    n_tokens: int
    scores_k: np.ndarray
    scores_q: np.ndarray


class KeywordModel:
    """Parameters plus forward passes. ``params`` maps names to grad-requiring tensors;
    ``question_embedding`` is the frozen encoder table."""

    def __init__(self, config, answer_vocab, question_vocab, params, question_embedding):
        self.config = config.validate()
        self.answer_vocab = answer_vocab
        self.question_vocab = question_vocab
        self.params = params
        self.question_embedding = np.asarray(question_embedding, dtype=np.float64)

    @classmethod
    def initialize(cls, config, answer_vocab, question_vocab, rng, answer_embedding=None,
                   question_embedding=None):
        """Draw every parameter from ``rng`` in a fixed order (the order below)."""
        config.validate()
        d_e, h, H = config.d_e, config.attn_hidden, config.lstm_hidden
        n_a, n_q = len(answer_vocab), len(question_vocab)
        p = {}

        def put(name, value):
            p[name] = T.Tensor(value, requires_grad=True, name=name)

        if answer_embedding is None:
            answer_embedding = rng.uniform(-0.1, 0.1, size=(n_a, d_e))
        if question_embedding is None:
            question_embedding = rng.uniform(-0.1, 0.1, size=(n_q, d_e))
        if answer_embedding.shape != (n_a, d_e) or question_embedding.shape != (n_q, d_e):
            raise ConfigError("embedding tables do not match vocabulary sizes / d_e")
        put("answer_embedding", answer_embedding)
        put("positional", init_positional(rng, config.max_len, d_e))
        for m in ("s_a", "s_q"):
            for part, n_in in (("q", config.d_j), ("k", d_e), ("v", d_e)):
                w, b = init_linear(rng, h, n_in)
                put(f"{m}.{part}.weight", w)
                put(f"{m}.{part}.bias", b)
            w, b = init_linear(rng, d_e, h)
            put(f"{m}.out.weight", w)
            put(f"{m}.out.bias", b)
            put(f"{m}.ln.gain", np.ones(d_e))
            put(f"{m}.ln.bias", np.zeros(d_e))

        def add_sequence_decoder(prefix, cond_dim, vocab_size, embedding):
            put(f"{prefix}.embedding", embedding.copy())
            put(f"{prefix}.x0.weight", init_linear(rng, d_e, cond_dim, bias=False)[0])
            put(f"{prefix}.x.weight", init_linear(rng, d_e, cond_dim + d_e, bias=False)[0])
            w_ih, w_hh, bias = init_lstm(rng, d_e, H)
            put(f"{prefix}.lstm.w_ih", w_ih)
            put(f"{prefix}.lstm.w_hh", w_hh)
            put(f"{prefix}.lstm.bias", bias)
            w, b = init_linear(rng, vocab_size, H)
            put(f"{prefix}.out.weight", w)
            put(f"{prefix}.out.bias", b)

        add_sequence_decoder("d_all", 2 * d_e, n_a, answer_embedding)
        if config.ablation == "lstm_disc":
            add_sequence_decoder("d_a_lstm", 2 * d_e, n_a, answer_embedding)
            add_sequence_decoder("d_q_lstm", d_e + config.d_img, n_q, question_embedding)
        else:
            w, b = init_linear(rng, n_a, 2 * d_e)
            put("d_a.weight", w)
            put("d_a.bias", b)
            w, b = init_linear(rng, n_q, d_e + config.d_img)
            put("d_q.weight", w)
            put("d_q.bias", b)
        return cls(config, answer_vocab, question_vocab, p, question_embedding)

    # -- pieces ---

    def encode_batch(self, batch):
        return encode(batch.image, batch.question_ids, self.question_embedding, batch.question_mask)

    def answer_features(self, batch):
        n = batch.answer_ids.shape[1]
        if n > self.config.max_len:
            raise ValidationError(f"answer length {n} exceeds max_len {self.config.max_len}")
        emb = T.take_rows(self.params["answer_embedding"], batch.answer_ids)
        return emb + self.params["positional"][:n]

    def score(self, batch, enc=None):
        """Raw keyword and question scores with values: ((a_k, V_k), (a_q, V_q))."""
        enc = enc or self.encode_batch(batch)
        f_joint = T.Tensor(enc.f_joint)
        f_answer = self.answer_features(batch)
        return (attention_score(f_joint, f_answer, self.params, "s_a"),
                attention_score(f_joint, f_answer, self.params, "s_q"))

    def forward(self, batch, tau, rng=None, word_dropout=None, hook=None):
        """Batch-averaged loss breakdown and the differentiable total."""
        cfg = self.config
        if word_dropout is None:
            word_dropout = cfg.word_dropout
        enc = self.encode_batch(batch)
        (a_k, v_k), (a_q, v_q) = self.score(batch, enc)
        mask = batch.answer_mask
        f_k, f_q = project_outputs(select_keyword_soft(a_k, v_k, tau, mask),
                                   question_vector(a_q, v_q, mask), self.params)
        bsz = len(batch)
        zero = T.Tensor(0.0)

        l_all = zero
        n_tokens = int(mask.sum()) + bsz
        if cfg.lambda_all > 0:
            per_ex, n_tokens = entire_decoder_loss(f_k, f_q, batch.answer_ids, mask, self.params,
                                                   word_dropout, rng, hook)
            l_all = T.mean(per_ex)
        l_a, l_q = discriminative_losses(
            f_k, f_q, enc.f_ques, enc.f_img, batch.bow_answer, batch.bow_question, self.params,
            self._with_dropout(word_dropout),
            answer=(batch.answer_ids, mask), question=(batch.question_ids, batch.question_mask), rng=rng)
        l_a = zero if l_a is None else T.mean(l_a)
        l_q = zero if l_q is None else T.mean(l_q)
        parts = LossBreakdown(l_all, l_a, l_q, cfg.lambda_all, cfg.lambda_a, cfg.lambda_q)
        total = total_loss(parts)
        values = LossBreakdown(l_all.item(), l_a.item(), l_q.item(), cfg.lambda_all, cfg.lambda_a, cfg.lambda_q)
        return ForwardResult(values, total, n_tokens, a_k.data, a_q.data)

    def _with_dropout(self, rate):
        if rate == self.config.word_dropout:
            return self.config
        return ModelConfig(**{**asdict(self.config), "word_dropout": rate})

    def keyword_scores(self, batch):
        """Raw keyword scores [B, n] (no temperature); padded positions are -inf."""
        (a_k, _), _ = self.score(batch)
        return np.where(batch.answer_mask, a_k.data, -np.inf)

    def extract_batch(self, batch):
        """Hard argmax over raw keyword scores; ties go to the lowest index."""
        scores = self.keyword_scores(batch)
        out = []
        for i, toks in enumerate(batch.answer_tokens):
            s = scores[i, :len(toks)]
            idx = int(np.argmax(s))
            out.append((toks[idx], idx, s.tolist()))
        return out

    # -- persistence ---

    def state_arrays(self):
        arrays = {name: t.data for name, t in self.params.items()}
        arrays["encoder.question_embedding"] = self.question_embedding
        return arrays

    def meta(self):
        return {
            "model_config": asdict(self.config),
            "answer_vocab": self.answer_vocab.itos,
            "question_vocab": self.question_vocab.itos,
        }

    @classmethod
    def from_state(cls, arrays, meta):
        arrays = dict(arrays)
        config = ModelConfig.from_dict(meta["model_config"])
        q_emb = arrays.pop("encoder.question_embedding")
        params = {k: T.Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        return cls(config, Vocabulary(meta["answer_vocab"]), Vocabulary(meta["question_vocab"]), params, q_emb)


def extract_keyword(model, example, features):
    """Keyword of one example: ``(token, index, raw scores)``."""
    enc = encode_example(example, features, model.answer_vocab, model.question_vocab, model.config.max_len)
    return model.extract_batch(collate([enc]))[0]


def extract_dataset(model, examples, features, batch_size=256):
    """Keyword extraction for every example, order preserved."""
    from .evaluation import Extraction

    out = []
    cfg = model.config
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        enc = [encode_example(ex, features, model.answer_vocab, model.question_vocab, cfg.max_len) for ex in chunk]
        for ex, (tok, _, scores) in zip(chunk, model.extract_batch(collate(enc))):
            out.append(Extraction(ex.example_id, tok, ex.answer_tokens[:len(scores)], scores))
    return out
