"""Central finite-difference verification of autodiff gradients."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

FD_STEP = 1e-5


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tolerance: float
    per_input: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: max rel err {self.max_rel_error:.2e} (tol {self.tolerance:.0e})"


def relative_error(analytic, numeric):
    """||a - n|| / max(||a||, ||n||); falls back to the absolute difference when both are ~0."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-10:
        return float(diff)
    return float(diff / scale)


def grad_check(fn, inputs, tolerance=1e-5, step=FD_STEP, name="op"):
    """Compare autodiff gradients of scalar ``fn(*tensors)`` with central differences.

    ``inputs`` is a dict name -> array (or a list of arrays). Every input is
    wrapped as a grad-requiring tensor. ``fn`` must be deterministic.
    """
    if not isinstance(inputs, dict):
        inputs = {f"x{i}": v for i, v in enumerate(inputs)}
    arrays = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}

    def evaluate(arrs, track):
        ts = {k: Tensor(a, requires_grad=track) for k, a in arrs.items()}
        out = fn(*ts.values())
        return out, ts

    out, tensors = evaluate(arrays, True)
    if out.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()

    report = GradCheckReport(name=name, max_rel_error=0.0, tolerance=tolerance)
    for key, base in arrays.items():
        analytic = tensors[key].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = fn(*[Tensor(a) for a in arrays.values()]).item()
            flat[i] = orig - step
            fm = fn(*[Tensor(a) for a in arrays.values()]).item()
            flat[i] = orig
            numeric.reshape(-1)[i] = (fp - fm) / (2 * step)
        err = relative_error(analytic, numeric)
        report.per_input[key] = err
        report.max_rel_error = max(report.max_rel_error, err)
    return report


def random_projection(shape, seed=0):
    """Fixed random weights used to reduce a non-scalar output to a scalar for checking."""
    return np.random.default_rng(seed).normal(size=shape)


def tiny_model_problem(seed=0, ablation="none", n_examples=4):
    """A tiny model, a batch and a deterministic loss closure over its parameters.

    Dimensions follow the end-to-end check: d_img=8, d_e=6, attention hidden 5,
    LSTM hidden 7, batch of 4. Word dropout is off so the loss is a pure function.
    """
    from .data import SyntheticSpec, make_synthetic
    from .model import KeywordModel, ModelConfig, collate, encode_example
    from .text import build_vocab, tokenize

    data = make_synthetic(SyntheticSpec(n_train=n_examples, n_val=0, n_keyword_classes=3, n_templates=2,
                                        n_contexts=2, n_modifiers=2, d_img=8, d_e=6, seed=seed))
    cfg = ModelConfig(d_img=8, d_e=6, attn_hidden=5, lstm_hidden=7, max_len=16, word_dropout=0.0,
                      ablation=ablation)
    a_vocab = build_vocab([tokenize(ex.answer) for ex in data.train])
    q_vocab = build_vocab([tokenize(ex.question) for ex in data.train])
    model = KeywordModel.initialize(cfg, a_vocab, q_vocab, np.random.default_rng(seed))
    batch = collate([encode_example(ex, data.features, a_vocab, q_vocab, cfg.max_len) for ex in data.train])
    names = list(model.params)

    def loss(*tensors, tau=0.5):
        model.params = dict(zip(names, tensors))
        return model.forward(batch, tau, word_dropout=0.0).total

    return model, batch, names, loss


def standard_battery(seed=0):
    """Finite-difference checks of every differentiable operation plus one end-to-end model check."""
    from . import tensor as T
    from .nn import lstm_cell_step

    rng = np.random.default_rng(seed)
    reports = []

    def check(name, fn, shapes, tolerance=1e-5):
        reports.append(grad_check(fn, [rng.normal(size=s) for s in shapes], tolerance=tolerance, name=name))

    r4, r23, r25 = random_projection(4, seed), random_projection((2, 3), seed), random_projection((2, 5), seed)
    check("linear", lambda x, w, b: (T.linear(x, w, b) * r4).sum(), [(3,), (4, 3), (4,)])
    check("softmax", lambda s: (T.softmax(s, tau=0.3) * r23).sum(), [(2, 3)])
    check("l2_normalize", lambda v: (T.l2_normalize(v) * r4).sum(), [(4,)])
    check("layer_norm", lambda v, g, b: (T.layer_norm(v, g, b) * r25).sum(), [(2, 5), (5,), (5,)])
    target = rng.dirichlet(np.ones(5), size=2)
    check("cross_entropy", lambda z: T.cross_entropy(z, target).sum(), [(2, 5)])

    r2 = random_projection(2, seed)

    def cell(x, h, c, w_ih, w_hh, b):
        h1, c1 = lstm_cell_step(x, h, c, w_ih, w_hh, b)
        return ((h1 + c1) * r2).sum()

    check("lstm_cell", cell, [(3,), (2,), (2,), (8, 3), (8, 2), (8,)])

    model, _, names, loss = tiny_model_problem(seed)
    reports.append(grad_check(loss, {n: model.params[n].data.copy() for n in names},
                              tolerance=1e-4, name="model_end_to_end"))
    return reports
