"""Dense linear algebra helpers, activations and the Adam optimizer.

Matrices and vectors are plain float64 numpy arrays. The helpers here check
shapes and give readable errors; hot loops elsewhere use numpy directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 1 and rows is not None and cols is not None:
        if m.size != rows * cols:
            raise ValueError(f"expected {rows * cols} values for a {rows}x{cols} matrix, got {m.size}")
        m = m.reshape(rows, cols)
    if m.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: matrix {m.shape} vs vector {v.shape}")
    return m @ v


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"hadamard length mismatch: {a.shape} vs {b.shape}")
    return a * b


def sigmoid(x):
    """Logistic function, split on sign so exp never overflows."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def apply_activation(kind: Activation | str, v):
    kind = Activation(kind)
    if kind is Activation.SIGMOID:
        return sigmoid(v)
    return np.tanh(np.asarray(v, dtype=np.float64))


def activation_grad_from_output(kind: Activation | str, out: np.ndarray) -> np.ndarray:
    # derivative expressed through the activation's own output
    if Activation(kind) is Activation.SIGMOID:
        return out * (1.0 - out)
    return 1.0 - out * out


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 0.001

    def __post_init__(self):
        if self.first_moment.shape != self.second_moment.shape:
            raise ValueError("first and second moment must have the same length")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.step_count < 0:
            raise ValueError("step_count must be non-negative")

    @classmethod
    def fresh(cls, n_params: int, learning_rate: float = 0.001, **kwargs) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0, learning_rate=learning_rate, **kwargs)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Returns new params and a new state; inputs are not modified."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError(
            f"adam_step length mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moment.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (grads * grads)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)
