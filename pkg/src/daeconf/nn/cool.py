"""Competitive overcomplete output layer (COOL).

Each of the ``K`` classes owns ``omega`` output units and a single softmax
runs over all ``K * omega`` of them. A class's probability is the sum of its
members; its confidence is ``omega**omega`` times the product of its members,
so ``omega`` equal members holding mass ``s`` score exactly ``s**omega``.
Units are laid out class-major: class ``k`` owns ``k*omega .. k*omega+omega-1``.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError
from ..tensor import Rng
from .layers import Dense, log_softmax, softmax


class CoolHead:
    def __init__(self, in_features: int, num_classes: int, omega: int = 10,
                 rng: Rng | None = None):
        if omega < 1:
            raise ParameterError("omega must be >= 1")
        self.num_classes = int(num_classes)
        self.omega = int(omega)
        self.logits_layer = Dense(in_features, self.num_classes * self.omega, rng)

    def params(self):
        return self.logits_layer.params()


def cool_forward(head: CoolHead, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(class_probs, confidence)``, both of shape ``[N, K]``."""
    logits, _ = head.logits_layer.forward(np.atleast_2d(features))
    return cool_from_logits(logits, head.num_classes, head.omega)


def cool_from_logits(logits: np.ndarray, num_classes: int, omega: int
                     ) -> tuple[np.ndarray, np.ndarray]:
    n = logits.shape[0]
    p = softmax(logits).reshape(n, num_classes, omega)
    logp = log_softmax(logits).reshape(n, num_classes, omega)
    class_probs = p.sum(axis=2)
    confidence = np.exp(omega * math.log(omega) + logp.sum(axis=2))
    return class_probs, np.minimum(confidence, 1.0)


def cool_targets(labels: np.ndarray, num_classes: int, omega: int) -> np.ndarray:
    """Soft targets spreading each label's unit mass evenly over its members."""
    labels = np.asarray(labels, dtype=np.int64)
    t = np.zeros((labels.shape[0], num_classes, omega))
    t[np.arange(labels.shape[0]), labels, :] = 1.0 / omega
    return t.reshape(labels.shape[0], num_classes * omega)
