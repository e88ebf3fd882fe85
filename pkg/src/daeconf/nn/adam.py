"""The Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, ParameterError


@dataclass
class AdamState:
    eta: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.eta <= 0:
            raise ParameterError("eta must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("beta1 and beta2 must lie in [0, 1)")
        if self.t < 0:
            raise ParameterError("t must be >= 0")


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
              ) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise DimensionError("optimizer state does not match the parameter list")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"parameter {p.shape} / gradient {g.shape} mismatch")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.eta * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


class Adam:
    """Adam over a fixed parameter list, taking gradients keyed by ``id(param)``."""

    def __init__(self, params: list[np.ndarray], eta: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.state = AdamState(eta, beta1, beta2, epsilon)

    def step(self, grads: dict[int, np.ndarray]) -> None:
        g = [grads.get(id(p)) for p in self.params]
        g = [np.zeros_like(p) if gi is None else gi for p, gi in zip(self.params, g)]
        adam_step(self.params, g, self.state)
