"""Dense float64 tensors and a portable seeded random generator.

Tensors are plain ``numpy.ndarray`` objects with dtype float64 stored in C
(row-major) order. The helpers here enforce that contract at the module
boundaries where it matters and add the handful of operations the rest of
the package relies on.

Random numbers come from :class:`Rng`, a thin wrapper around numpy's Philox
counter-based bit generator. Philox output is fixed by its algorithm and
constants, so a seed gives the same stream on every platform and numpy
release that ships it. Parallel work never shares an ``Rng``; it derives
independent children with :meth:`Rng.derive` or :meth:`Rng.split`.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from .errors import DimensionError, ParameterError

Tensor = np.ndarray

__all__ = ["Tensor", "Rng", "as_tensor", "matmul", "gaussian", "l2_norm"]


def as_tensor(data, shape: Sequence[int] | None = None) -> Tensor:
    """Return ``data`` as a contiguous float64 array, optionally reshaped."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if math.prod(shape) != arr.size:
            raise DimensionError(f"cannot view {arr.size} elements as shape {shape}")
        arr = arr.reshape(shape)
    return arr


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an ``m x k`` and a ``k x n`` tensor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def l2_norm(v: Tensor) -> float:
    """Euclidean norm of the flattened tensor."""
    flat = np.asarray(v, dtype=np.float64).ravel()
    return float(math.sqrt(float(flat @ flat)))


class Rng:
    """Seeded Philox generator with deterministic child derivation.

    ``derive(*keys)`` is a pure function of the parent seed and the keys, so
    jobs can be assigned seeds by index and produce the same draws whatever
    order (or process) they run in. ``split(n)`` is shorthand for
    ``[derive(i) for i in range(n)]`` offset by an internal counter so that
    successive splits do not collide.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            if int(seed) < 0:
                raise ParameterError("seed must be non-negative")
            self._seq = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.Philox(self._seq))
        self._splits = 0

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def derive(self, *keys: int) -> "Rng":
        key = tuple(int(k) for k in keys)
        seq = np.random.SeedSequence(
            self._seq.entropy, spawn_key=tuple(self._seq.spawn_key) + key
        )
        return Rng(seq)

    def split(self, n: int) -> list["Rng"]:
        # 2**20 offset keeps split children disjoint from small derive() keys
        base = (1 << 20) + self._splits
        self._splits += n
        return [self.derive(base, i) for i in range(n)]

    def normal(self, shape, mean: float = 0.0, sigma: float = 1.0) -> Tensor:
        return gaussian(self, shape, mean, sigma)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> Tensor:
        return self._gen.uniform(low, high, size=_shape(shape))

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, values, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(values, size=size, replace=replace)


def gaussian(rng: Rng, shape, mean: float = 0.0, sigma: float = 1.0) -> Tensor:
    """I.i.d. normal draws of the given shape."""
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    shape = _shape(shape)
    if sigma == 0:
        return np.full(shape, float(mean))
    return rng.generator.normal(mean, sigma, size=shape)


def _shape(shape) -> tuple[int, ...]:
    if np.isscalar(shape):
        return (int(shape),)
    return tuple(int(s) for s in shape)
