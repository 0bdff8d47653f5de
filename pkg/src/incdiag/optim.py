"""Minimal Adam optimizer over lists of numpy arrays.

Functional style: a step returns new parameter arrays and a new state, so
parameter objects stay immutable between updates. Weight decay is the
classic L2 form folded into the gradient.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class AdamState:
    step: int
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]

    @staticmethod
    def init(arrays: list[np.ndarray]) -> "AdamState":
        return AdamState(0, tuple(np.zeros_like(a) for a in arrays),
                         tuple(np.zeros_like(a) for a in arrays))


def adam_step(arrays: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> tuple[list[np.ndarray], AdamState]:
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ValueError("parameter, gradient, and state lengths must match")
    t = state.step + 1
    new_arrays = []
    new_m = []
    new_v = []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * a
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_arrays.append(a - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_arrays, AdamState(t, tuple(new_m), tuple(new_v))
