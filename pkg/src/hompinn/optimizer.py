"""Adam over the concatenated trainable vector (network weights + DE params).

Standard bias-corrected update. The learning rate may be a scalar or a
per-coordinate vector, which is how a separate rate for the DE-parameter
block is applied when configured.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolationError, DivergenceError

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    m: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    t: int
    lr: np.ndarray | float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, size: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), t=0,
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, grad: np.ndarray, trainables: np.ndarray):
    """One in-place update; returns the (state, trainables) pair.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    x <- x - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """
    if grad.shape != trainables.shape or grad.shape != state.m.shape:
        raise ContractViolationError("gradient/trainable/state dimensions differ")
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise DivergenceError(
            f"non-finite gradient entry at index {bad[0]}", index=int(bad[0]))
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * (grad * grad)
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    trainables -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state, trainables
