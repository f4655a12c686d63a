"""
Minimal dense tensor with reverse-mode automatic differentiation.

Every op builds a node holding its parents and a closure that pushes the
output gradient back to them. ``Tensor.backward`` walks the graph in reverse
topological order. Values are always float64 and must stay finite: an op that
produces NaN/Inf raises ``NumericError`` immediately instead of poisoning the
rest of the graph.

Shapes are numpy shapes, so every op works on a single vector as well as on a
leading batch dimension.
"""

import numpy as np

from .errors import DimensionError, NormalizationError, NumericError, ParameterError, ValidationError


def _check_finite(arr, what):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite value produced by {what}")


class Tensor:
    """float64 array plus an optional gradient buffer and the node that produced it."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if arr is data and _op == "leaf":
            arr = arr.copy()
        _check_finite(arr, _op)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    # -- introspection -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # -- autodiff ----------------------------------------------------------

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        if not self.requires_grad:
            raise ValidationError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.data.shape:
            raise DimensionError(f"seed gradient shape {grad.shape} != {self.data.shape}")
        _check_finite(grad, "seed gradient")

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        # Interior nodes get a fresh buffer for this pass; leaves keep accumulating.
        for node in order:
            if node._parents:
                node.grad = None
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    """Create an op output; the graph is only recorded when some parent needs grad."""
    live = tuple(p for p in parents if p.requires_grad)
    if live:
        return Tensor(data, requires_grad=True, _parents=live, _backward=backward, _op=op)
    return Tensor(data, _op=op)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise arithmetic ------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add: cannot broadcast {a.shape} and {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise DimensionError(f"sub: cannot broadcast {a.shape} and {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(out, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"mul: cannot broadcast {a.shape} and {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0):
        raise NumericError("division by zero")
    out = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out, (a, b), backward, "div")


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: a._accumulate(-g), "neg")


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * out), "exp")


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericError("log of a non-positive value")
    out = np.log(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g / a.data), "log")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)), "tanh")


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # Split by sign so exp never overflows.
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)), "sigmoid")


# -- shape manipulation ----------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {a.shape} -> {shape}") from exc
    return _make(out, (a,), lambda g: a._accumulate(g.reshape(a.shape)), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (a,), lambda g: a._accumulate(np.transpose(g, inv)), "transpose")


def broadcast_to(a, shape):
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError as exc:
        raise DimensionError(f"broadcast_to: {a.shape} -> {shape}") from exc
    return _make(out.copy(), (a,), lambda g: a._accumulate(_unbroadcast(g, a.shape)), "broadcast")


def getitem(a, idx):
    a = as_tensor(a)
    out = a.data[idx]

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (slice, int, type(Ellipsis))) for i in parts)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        a._accumulate(full)

    return _make(np.array(out), (a,), backward, "getitem")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(out, tuple(tensors), backward, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from exc

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return _make(out, tuple(tensors), backward, "stack")


def take_rows(table, ids):
    """Embedding lookup: ``table[ids]`` with scatter-add backward for repeated ids."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError("take_rows expects a 2-D table")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"take_rows: id out of range for table with {table.shape[0]} rows")
    out = table.data[ids]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        table._accumulate(full)

    return _make(out, (table,), backward, "take_rows")


# -- reductions and products -----------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise DimensionError("matmul needs at least 1-D operands")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}") from exc

    def backward(g):
        ad, bd = a.data, b.data
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if ad.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bd.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        if a.requires_grad:
            ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
            if ad.ndim == 1:
                ga = ga.reshape(ga.shape[:-2] + (ga.shape[-1],))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
            if bd.ndim == 1:
                gb = gb.reshape(gb.shape[:-1])
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(out, (a, b), backward, "matmul")


# -- layer primitives ------------------------------------------------------

def linear(x, weight, bias=None):
    """``weight @ x + bias`` along the last axis; weight is [out, in]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.ndim == 0 or x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias {bias.shape} != ({weight.shape[0]},)")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            weight._accumulate(g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1]))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, backward, "linear")


def _masked_exp_normalize(z, axis, mask):
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    if not np.isfinite(zmax).all():
        raise ValidationError("softmax over a row with no unmasked entries")
    e = np.exp(z - zmax)
    return e / e.sum(axis=axis, keepdims=True), z - zmax


def softmax(scores, tau=1.0, axis=-1, mask=None):
    """Temperature softmax ``exp(s/tau) / sum exp(s/tau)``; masked entries get probability 0."""
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    scores = as_tensor(scores)
    if scores.ndim == 0 or scores.shape[axis] < 1:
        raise DimensionError("softmax needs at least one score")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    p, _ = _masked_exp_normalize(scores.data / tau, axis, mask)

    def backward(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        scores._accumulate(p * (g - dot) / tau)

    return _make(p, (scores,), backward, "softmax")


def log_softmax(logits, axis=-1):
    logits = as_tensor(logits)
    z = logits.data - logits.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _make(out, (logits,), lambda g: logits._accumulate(g - p * g.sum(axis=axis, keepdims=True)), "log_softmax")


def l2_normalize(v, axis=-1):
    """Scale to unit Euclidean norm. A zero vector is an error, never a silent zero."""
    v = as_tensor(v)
    norm = np.sqrt((v.data * v.data).sum(axis=axis, keepdims=True))
    if np.any(norm == 0):
        raise NormalizationError("cannot l2-normalize a zero vector")
    out = v.data / norm

    def backward(g):
        v._accumulate((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm)

    return _make(out, (v,), backward, "l2_normalize")


LAYER_NORM_EPS = 1e-5


def layer_norm(v, gain, bias, eps=LAYER_NORM_EPS):
    """Standardize over the last axis (population variance), then ``gain * x + bias``."""
    v, gain, bias = as_tensor(v), as_tensor(gain), as_tensor(bias)
    n = v.shape[-1] if v.ndim else 0
    if n < 2:
        raise DimensionError("layer_norm needs at least 2 features")
    if gain.shape != (n,) or bias.shape != (n,):
        raise DimensionError(f"layer_norm: gain/bias must have shape ({n},)")
    mu = v.data.mean(axis=-1, keepdims=True)
    xc = v.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, n).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, n).sum(axis=0))
        if v.requires_grad:
            gx = g * gain.data
            v._accumulate(inv * (gx - gx.mean(axis=-1, keepdims=True)
                                 - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))

    return _make(out, (v, gain, bias), backward, "layer_norm")


def _validate_distribution(target, tol=1e-6):
    if np.any(target < 0):
        raise ValidationError("target distribution has negative entries")
    sums = target.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValidationError(f"target distribution rows must sum to 1 (got {sums.min()}..{sums.max()})")


def cross_entropy(logits, target_dist):
    """``-sum_i target_i * log softmax(logits)_i`` along the last axis, one value per row."""
    logits = as_tensor(logits)
    target = np.asarray(target_dist.data if isinstance(target_dist, Tensor) else target_dist, dtype=np.float64)
    if target.shape != logits.shape:
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs target {target.shape}")
    _validate_distribution(target)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    out = -(target * logp).sum(axis=-1)
    p = np.exp(logp)

    def backward(g):
        g = np.expand_dims(g, -1)
        # rows of target sum to one, so d/dlogits = p - target
        logits._accumulate(g * (p - target))

    return _make(out, (logits,), backward, "cross_entropy")


def token_cross_entropy(logits, target_ids):
    """Negative log-likelihood of integer targets; ``logits`` is [..., V], ids are [...]."""
    logits = as_tensor(logits)
    ids = np.asarray(target_ids, dtype=np.int64)
    if ids.shape != logits.shape[:-1]:
        raise DimensionError(f"token_cross_entropy: ids {ids.shape} vs logits {logits.shape}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    out = -np.take_along_axis(logp, ids[..., None], axis=-1)[..., 0]
    p = np.exp(logp)

    def backward(g):
        grad = p.copy()
        np.put_along_axis(grad, ids[..., None], np.take_along_axis(grad, ids[..., None], axis=-1) - 1.0, axis=-1)
        logits._accumulate(grad * g[..., None])

    return _make(out, (logits,), backward, "token_cross_entropy")
