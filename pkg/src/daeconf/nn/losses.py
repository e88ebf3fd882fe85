"""Loss functions and their gradients."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .layers import log_softmax, softmax

PROB_FLOOR = 1e-12


def _target_matrix(target, n: int, k: int) -> np.ndarray:
    t = np.asarray(target)
    if np.issubdtype(t.dtype, np.integer) and t.ndim <= 1:
        idx = np.broadcast_to(t.astype(np.int64), (n,))
        out = np.zeros((n, k))
        out[np.arange(n), idx] = 1.0
        return out
    if t.size != n * k:
        raise DimensionError(f"target of shape {t.shape} does not match probabilities [{n}, {k}]")
    return t.astype(np.float64).reshape(n, k)


def cross_entropy(probs, target) -> float:
    """Mean over the batch of ``-sum(target * log(prob))``.

    ``target`` is a class index (or an index per row) or a matrix of target
    vectors. Probabilities are clamped to ``[1e-12, 1]`` before the log.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    t = _target_matrix(target, p.shape[0], p.shape[1])
    logp = np.log(np.clip(p, PROB_FLOOR, 1.0))
    return float(-np.sum(t * logp) / p.shape[0])


def softmax_cross_entropy(logits: np.ndarray, target) -> tuple[float, np.ndarray]:
    """Cross-entropy of ``softmax(logits)`` and its gradient w.r.t. the logits."""
    z = np.atleast_2d(logits)
    n, k = z.shape
    t = _target_matrix(target, n, k)
    loss = float(-np.sum(t * log_softmax(z)) / n)
    grad = (softmax(z) * t.sum(axis=1, keepdims=True) - t) / n
    return loss, grad


def squared_error(recon: np.ndarray, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-sample summed squared error averaged over the batch, and its gradient."""
    n = recon.shape[0]
    diff = (recon - x).reshape(n, -1)
    loss = float(np.sum(diff * diff) / n)
    return loss, (2.0 / n) * (recon - x)


def l2_penalty(weights: list[np.ndarray], lam: float) -> tuple[float, list[np.ndarray]]:
    if lam == 0:
        return 0.0, [np.zeros_like(w) for w in weights]
    loss = lam * sum(float(np.sum(w * w)) for w in weights)
    return loss, [2.0 * lam * w for w in weights]
