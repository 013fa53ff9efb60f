"""Central finite-difference checks for the hand-written gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import nn
from .nn import MLPModel


def numerical_gradient(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``f()`` w.r.t. every entry of ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * eps)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_model(model: MLPModel, batch, loss_grad: nn.LossFn, eps: float = 1e-5) -> float:
    """Worst relative error over all weights and biases of ``model``."""
    pre, post = nn.forward_all(model, batch)
    _, grad_out = loss_grad(post[-1])
    analytic = nn.backward(model, batch, pre, post, grad_out)

    def f() -> float:
        return loss_grad(nn.predict(model, batch))[0]

    worst = 0.0
    for layer, (dw, db) in zip(model.layers, analytic):
        worst = max(worst, relative_error(dw, numerical_gradient(f, layer.weights, eps)))
        worst = max(worst, relative_error(db, numerical_gradient(f, layer.bias, eps)))
    return worst
