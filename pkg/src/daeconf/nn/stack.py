"""Ordered layer stacks with a train-mode tape."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

from ..errors import ParameterError, StateError
from .layers import Layer, ParamGrad


class Tape(list):
    """Per-layer caches recorded by :meth:`LayerStack.run`."""


class LayerStack:
    """A sequence of layers applied in order.

    ``forward(x, mode="train")`` stores the tape on the stack so that a
    following ``backward(grad_out)`` can use it; ``run``/``backprop`` do the
    same work without touching stack state.
    """

    def __init__(self, layers: Iterable[Layer] = ()):
        self.layers: list[Layer] = list(layers)
        self._tape: Tape | None = None

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    def run(self, x: np.ndarray) -> tuple[np.ndarray, Tape]:
        tape = Tape()
        for layer in self.layers:
            x, cache = layer.forward(x)
            tape.append(cache)
        return x, tape

    def backprop(self, tape: Tape, grad: np.ndarray, param_grads: bool = True
                 ) -> tuple[list[ParamGrad], np.ndarray]:
        pairs: list[ParamGrad] = []
        for layer, cache in zip(reversed(self.layers), reversed(tape)):
            grad, pg = layer.backward(cache, grad, param_grads)
            pairs.extend(pg)
        return pairs, grad

    def forward(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        if mode not in ("train", "eval"):
            raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
        y, tape = self.run(np.asarray(x, dtype=np.float64))
        self._tape = tape if mode == "train" else None
        return y

    def backward(self, grad_out: np.ndarray) -> tuple[list[ParamGrad], np.ndarray]:
        if self._tape is None:
            raise StateError("backward called without a preceding train-mode forward")
        return self.backprop(self._tape, grad_out)

    def params(self) -> list[np.ndarray]:
        """Unique trainable arrays, in layer order."""
        seen: set[int] = set()
        out = []
        for layer in self.layers:
            for _, p in layer.params():
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        return out

    def output_shape(self, input_shape: Sequence[int]) -> tuple[int, ...]:
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape


def sum_grads(pairs: Iterable[ParamGrad], into: dict[int, np.ndarray] | None = None
              ) -> dict[int, np.ndarray]:
    """Accumulate ``(param, grad)`` pairs into a dict keyed by ``id(param)``."""
    into = {} if into is None else into
    for p, g in pairs:
        if id(p) in into:
            into[id(p)] = into[id(p)] + g
        else:
            into[id(p)] = np.array(g, dtype=np.float64)
    return into
