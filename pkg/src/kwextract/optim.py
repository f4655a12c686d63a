"""Adam with bias correction, operating in place on named parameter tensors."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")


def adam_step(params, grads, state):
    """Apply one Adam update to ``params`` (name -> Tensor) in place.

    ``grads`` maps names to arrays; a missing or ``None`` entry counts as a zero
    gradient, so a parameter that never saw a gradient and has zero moments is
    left bit-identical.
    """
    for name, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t

    for name, p in params.items():
        g = grads.get(name)
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(p.data)
            state.second_moment[name] = np.zeros_like(p.data)
        v = state.second_moment[name]
        if g is None:
            if not m.any() and not v.any():
                continue
            g = np.zeros_like(p.data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        p.data -= update
    return params, state
