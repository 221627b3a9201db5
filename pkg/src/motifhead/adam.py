"""Adam optimizer (no weight decay) over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, tensors: list[np.ndarray], lr: float = 0.001,
                   beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "AdamState":
        return cls(step=0,
                   m=[np.zeros_like(t) for t in tensors],
                   v=[np.zeros_like(t) for t in tensors],
                   lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(tensors: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> None:
    """One update, in place: m and v move, step increments, params descend.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with the usual
    bias-corrected moments m_hat = m / (1 - beta1^t), v_hat = v / (1 - beta2^t).
    """
    if len(tensors) != len(state.m) or len(tensors) != len(grads):
        raise ShapeError("parameter/gradient/state tensor counts disagree")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for theta, g, m, v in zip(tensors, grads, state.m, state.v):
        if theta.shape != g.shape or theta.shape != m.shape:
            raise ShapeError(
                f"shape mismatch in adam_step: param {theta.shape}, grad {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        theta -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
