"""Exact t-SNE (no Barnes-Hut) for a few thousand points at most."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import pairwise_sq_dists
from .nn import NonFiniteError


class CalibrationError(RuntimeError):
    def __init__(self, rows):
        self.rows = list(rows)
        shown = ", ".join(map(str, self.rows[:20]))
        more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
        super().__init__(f"perplexity calibration did not converge for rows {shown}{more}")


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    seed: int = 0


@dataclass
class TsneResult:
    coords: np.ndarray
    kl_trace: list[float] = field(default_factory=list)
    sigmas: np.ndarray | None = None


def _row_entropy(d2: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional rows p_{j|i} (diagonal masked by inf distances) and their entropies."""
    shift = d2.min(axis=1, keepdims=True)
    logits = -(d2 - shift) / (2.0 * sigma[:, None] ** 2)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    z = e.sum(axis=1, keepdims=True)
    p = e / z
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = logits - np.log(z)
        h = -np.sum(np.where(p > 0, p * logp, 0.0), axis=1)
    return p, h


def calibrate_sigmas(distances, perplexity: float, tol: float = 1e-5, max_iter: int = 50) -> np.ndarray:
    """Per-row Gaussian widths whose conditional distributions have entropy
    ln(perplexity), by geometric bisection on sigma.

    ``distances`` is a symmetric, zero-diagonal matrix of Euclidean distances.
    """
    d = np.asarray(distances, dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n) or not np.allclose(d, d.T) or np.any(np.diag(d) != 0):
        raise ValueError("distances must be a symmetric zero-diagonal square matrix")
    d2 = d * d
    np.fill_diagonal(d2, np.inf)
    target = math.log(perplexity)
    finite = np.where(np.isfinite(d2), d2, 0.0)
    sigma = np.sqrt(finite.sum(axis=1) / max(n - 1, 1))
    sigma[sigma == 0] = 1.0
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    active = np.arange(n)
    for _ in range(max_iter):
        if not len(active):
            break
        _, h = _row_entropy(d2[active], sigma[active])
        diff = h - target
        done = np.abs(diff) <= tol
        too_flat = diff > 0
        s = sigma[active]
        hi[active] = np.where(~done & too_flat, s, hi[active])
        lo[active] = np.where(~done & ~too_flat, s, lo[active])
        a_lo, a_hi = lo[active], hi[active]
        with np.errstate(invalid="ignore"):
            new = np.where(
                too_flat,
                np.where(a_lo > 0, np.sqrt(a_lo * a_hi), s / 2.0),
                np.where(np.isfinite(a_hi), np.sqrt(a_lo * a_hi), s * 2.0),
            )
        sigma[active] = np.where(done, s, new)
        active = active[~done]
    if len(active):
        raise CalibrationError(active)
    return sigma


def conditional_p(distances, sigmas) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    d2 = d * d
    np.fill_diagonal(d2, np.inf)
    p, _ = _row_entropy(d2, np.asarray(sigmas, dtype=np.float64))
    return p


def joint_p(points, perplexity: float) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrised P with p_ij = (p_{j|i} + p_{i|j}) / 2N, and the sigmas."""
    dist = np.sqrt(pairwise_sq_dists(points))
    np.fill_diagonal(dist, 0.0)
    dist = np.maximum(dist, dist.T)
    sigmas = calibrate_sigmas(dist, perplexity)
    pc = conditional_p(dist, sigmas)
    n = len(pc)
    return (pc + pc.T) / (2.0 * n), sigmas


def _entropy_term(P: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask])))


def kl_and_gradient(
    P: np.ndarray, Y: np.ndarray, exaggeration: float = 1.0, p_log_p: float | None = None
) -> tuple[float, np.ndarray]:
    """KL(P || Q) for Student-t (df=1) similarities Q of ``Y``, and the gradient
    with P scaled by ``exaggeration`` (the KL value always uses the plain P).

    ``p_log_p`` is sum(P log P), which callers iterating on a fixed P can cache.
    """
    if p_log_p is None:
        p_log_p = _entropy_term(P)
    d2 = np.zeros((len(Y), len(Y)))
    for k in range(Y.shape[1]):
        col = Y[:, k]
        diff = col[:, None] - col[None, :]
        d2 += diff * diff
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    # zero entries of P contribute nothing; the clamp keeps the diagonal finite
    kl = p_log_p - float(np.sum(P * np.log(np.maximum(Q, 1e-300))))
    W = (exaggeration * P - Q) * num
    grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
    return kl, grad


def fit_tsne(points, config: TsneConfig | None = None) -> TsneResult:
    config = config or TsneConfig()
    x = np.asarray(points, dtype=np.float64)
    n = len(x)
    if n < 4:
        raise ValueError("t-SNE needs at least 4 points")
    if not 1 < config.perplexity < n - 1:
        raise ValueError(f"perplexity must lie in (1, {n - 1})")
    P, sigmas = joint_p(x, config.perplexity)
    rng = np.random.default_rng(config.seed)
    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = []
    p_log_p = _entropy_term(P)
    for it in range(config.iterations):
        factor = config.exaggeration if it < config.exaggeration_iters else 1.0
        kl, grad = kl_and_gradient(P, Y, factor, p_log_p)
        momentum = config.momentum_initial if it < config.momentum_switch else config.momentum_final
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - config.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if not np.all(np.isfinite(Y)):
            raise NonFiniteError(f"t-SNE coordinates became non-finite at iteration {it}")
        trace.append(kl)
    return TsneResult(Y, trace, sigmas)
