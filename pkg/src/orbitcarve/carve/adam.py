from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def log_linear(start: float, end: float, step: int, total: int) -> float:
    """Geometric interpolation from ``start`` (step 0) to ``end`` (step total-1)."""
    if total <= 1:
        return start
    t = min(max(step / (total - 1), 0.0), 1.0)
    return float(start * (end / start) ** t)


class Adam:
    """Adaptive-moment descent on an ``(n, d)`` parameter array.

    The moments live per row so they can follow vertices through a remesh
    via :meth:`remap`.
    """

    def __init__(self, shape, betas=(0.9, 0.999), eps: float = 1e-8):
        b1, b2 = betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {betas}")
        self.beta1, self.beta2, self.eps = float(b1), float(b2), float(eps)
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        if grad.shape != self.m.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match moments {self.m.shape}")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def remap(self, transfer: sp.spmatrix) -> None:
        """Carry moments through a row-stochastic (new x old) transfer matrix."""
        self.m = np.asarray(transfer @ self.m)
        self.v = np.asarray(transfer @ self.v)
