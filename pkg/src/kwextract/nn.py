"""Layer building blocks on top of :mod:`kwextract.tensor`: initializers and the LSTM cell."""

import numpy as np

from . import tensor as T
from .errors import DimensionError

LSTM_INIT_RANGE = 0.08
LSTM_FORGET_BIAS = 1.0


def init_linear(rng, n_out, n_in, bias=True):
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for weight and bias."""
    bound = 1.0 / np.sqrt(n_in)
    w = rng.uniform(-bound, bound, size=(n_out, n_in))
    b = rng.uniform(-bound, bound, size=(n_out,)) if bias else None
    return w, b


def init_lstm(rng, n_in, n_hidden):
    """Weights uniform in [-0.08, 0.08]; gate order (input, forget, candidate, output).

    Biases are zero except the forget gate, which starts at +1.
    """
    w_ih = rng.uniform(-LSTM_INIT_RANGE, LSTM_INIT_RANGE, size=(4 * n_hidden, n_in))
    w_hh = rng.uniform(-LSTM_INIT_RANGE, LSTM_INIT_RANGE, size=(4 * n_hidden, n_hidden))
    bias = np.zeros(4 * n_hidden)
    bias[n_hidden:2 * n_hidden] = LSTM_FORGET_BIAS
    return w_ih, w_hh, bias


def lstm_cell_step(x, h_prev, c_prev, w_ih, w_hh, bias):
    """One LSTM step.

    ``x`` is [..., d_in], states are [..., d_h], ``w_ih`` is [4*d_h, d_in],
    ``w_hh`` is [4*d_h, d_h]. Returns ``(h, c)``.
    """
    x, h_prev, c_prev = T.as_tensor(x), T.as_tensor(h_prev), T.as_tensor(c_prev)
    w_ih, w_hh, bias = T.as_tensor(w_ih), T.as_tensor(w_hh), T.as_tensor(bias)
    d_h = h_prev.shape[-1]
    if w_hh.shape != (4 * d_h, d_h) or w_ih.shape[0] != 4 * d_h or bias.shape != (4 * d_h,):
        raise DimensionError(
            f"lstm_cell_step: hidden size {d_h} inconsistent with w_ih {w_ih.shape}, "
            f"w_hh {w_hh.shape}, bias {bias.shape}")
    if c_prev.shape != h_prev.shape:
        raise DimensionError("lstm_cell_step: h_prev and c_prev shapes differ")
    gates = T.linear(x, w_ih, bias) + T.linear(h_prev, w_hh)
    i = T.sigmoid(gates[..., :d_h])
    f = T.sigmoid(gates[..., d_h:2 * d_h])
    g = T.tanh(gates[..., 2 * d_h:3 * d_h])
    o = T.sigmoid(gates[..., 3 * d_h:])
    c = f * c_prev + i * g
    h = o * T.tanh(c)
    return h, c
