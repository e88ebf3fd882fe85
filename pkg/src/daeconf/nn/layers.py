"""Layers with explicit forward caches and hand-written backward passes.

Every layer is used functionally: ``forward(x)`` returns the output together
with whatever the backward pass needs, and ``backward(cache, grad)`` returns
the input gradient plus ``(parameter, gradient)`` pairs. Keeping the cache
outside the layer lets the same parameters be differentiated along several
paths at once (the joint model reads the encoder twice per step, and the
confidence score runs Jacobian passes while a training tape is alive).

Parameter gradients are paired with the parameter *array object*, so a
decoder that borrows an encoder weight (``TiedDense``) reports its gradient
against the encoder's array and optimizers sum the contributions by identity.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, ParameterError
from ..tensor import Rng

ParamGrad = tuple[np.ndarray, np.ndarray]


def glorot_uniform(rng: Rng, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -limit, limit)


class Layer:
    kind = "layer"

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(self, cache: Any, grad: np.ndarray, param_grads: bool = True
                 ) -> tuple[np.ndarray, list[ParamGrad]]:
        raise NotImplementedError

    def params(self) -> list[tuple[str, np.ndarray]]:
        """Trainable arrays owned by this layer."""
        return []

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(input_shape)

    def config(self) -> dict:
        return {"kind": self.kind}

    # Forward-mode and multi-seed reverse-mode products. Only the layers the
    # dense Jacobian fast path needs implement these; ``t`` and ``g`` carry a
    # seed axis right after the batch axis.
    def jvp(self, cache: Any, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} has no forward-mode rule")

    def vjp_seeds(self, cache: Any, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} has no multi-seed reverse rule")


class Dense(Layer):
    """Affine map ``x @ W + b`` with ``W`` of shape ``[in, out]``."""

    kind = "dense"

    def __init__(self, in_features: int, out_features: int, rng: Rng | None = None):
        if in_features < 1 or out_features < 1:
            raise ParameterError("dense layer widths must be positive")
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        if rng is None:
            self.W = np.zeros((self.in_features, self.out_features))
        else:
            self.W = glorot_uniform(rng, (self.in_features, self.out_features),
                                    self.in_features, self.out_features)
        self.b = np.zeros(self.out_features)

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"dense layer expects {self.in_features} inputs, got shape {x.shape}")
        return x @ self.W + self.b, x

    def backward(self, cache, grad, param_grads=True):
        x = cache
        gx = grad @ self.W.T
        if not param_grads:
            return gx, []
        return gx, [(self.W, x.T @ grad), (self.b, grad.sum(axis=0))]

    def jvp(self, cache, t):
        return t @ self.W

    def vjp_seeds(self, cache, g):
        return g @ self.W.T

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def output_shape(self, input_shape):
        return (self.out_features,)

    def config(self):
        return {"kind": self.kind, "in": self.in_features, "out": self.out_features}


class TiedDense(Layer):
    """Decoder layer computing ``x @ source.W.T + b``.

    Only the bias belongs to this layer; the weight gradient is reported
    against ``source.W`` so the pair stays exactly transposed through
    training.
    """

    kind = "tied_dense"

    def __init__(self, source: Dense):
        self.source = source
        self.b = np.zeros(source.in_features)

    @property
    def in_features(self) -> int:
        return self.source.out_features

    @property
    def out_features(self) -> int:
        return self.source.in_features

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"tied layer expects {self.in_features} inputs, got shape {x.shape}")
        return x @ self.source.W.T + self.b, x

    def backward(self, cache, grad, param_grads=True):
        x = cache
        gx = grad @ self.source.W
        if not param_grads:
            return gx, []
        return gx, [(self.source.W, grad.T @ x), (self.b, grad.sum(axis=0))]

    def jvp(self, cache, t):
        return t @ self.source.W.T

    def vjp_seeds(self, cache, g):
        return g @ self.source.W

    def params(self):
        return [("b", self.b)]

    def output_shape(self, input_shape):
        return (self.out_features,)

    def config(self):
        return {"kind": self.kind, "in": self.in_features, "out": self.out_features}


class Conv2D(Layer):
    """Stride-1 'valid' cross-correlation, weight shape ``[out, in, k, k]``."""

    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 5,
                 rng: Rng | None = None):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel = int(kernel)
        shape = (self.out_channels, self.in_channels, self.kernel, self.kernel)
        if rng is None:
            self.W = np.zeros(shape)
        else:
            k2 = self.kernel * self.kernel
            self.W = glorot_uniform(rng, shape, self.in_channels * k2, self.out_channels * k2)
        self.b = np.zeros(self.out_channels)

    def _cols(self, x):
        n, c, h, w = x.shape
        k = self.kernel
        win = sliding_window_view(x, (k, k), axis=(2, 3))  # n, c, ho, wo, k, k
        ho, wo = h - k + 1, w - k + 1
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k), ho, wo

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise DimensionError(
                f"conv2d expects [N, {self.in_channels}, H, W], got {x.shape}")
        if x.shape[2] < self.kernel or x.shape[3] < self.kernel:
            raise DimensionError(f"input {x.shape} smaller than kernel {self.kernel}")
        cols, ho, wo = self._cols(x)
        y = cols @ self.W.reshape(self.out_channels, -1).T + self.b
        y = y.reshape(x.shape[0], ho, wo, self.out_channels).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(y), (x.shape, cols, ho, wo)

    def backward(self, cache, grad, param_grads=True):
        xshape, cols, ho, wo = cache
        n, c, h, w = xshape
        k = self.kernel
        g2 = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        dcols = (g2 @ self.W.reshape(self.out_channels, -1)).reshape(n, ho, wo, c, k, k)
        gx = np.zeros(xshape)
        for i in range(k):
            for j in range(k):
                gx[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if not param_grads:
            return gx, []
        dW = (g2.T @ cols).reshape(self.W.shape)
        return gx, [(self.W, dW), (self.b, g2.sum(axis=0))]

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def output_shape(self, input_shape):
        c, h, w = input_shape
        return (self.out_channels, h - self.kernel + 1, w - self.kernel + 1)

    def config(self):
        return {"kind": self.kind, "in": self.in_channels, "out": self.out_channels,
                "kernel": self.kernel}


class MaxPool2x2(Layer):
    """2x2 max pooling with stride 2.

    Within each window the first maximum in row-major order receives the
    whole gradient.
    """

    kind = "maxpool2x2"

    def forward(self, x):
        if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
            raise DimensionError(f"maxpool2x2 expects [N, C, even H, even W], got {x.shape}")
        n, c, h, w = x.shape
        win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(n, c, h // 2, w // 2, 4)
        idx = np.argmax(win, axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, cache, grad, param_grads=True):
        (n, c, h, w), idx = cache
        win = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(win, idx[..., None], grad[..., None], axis=-1)
        gx = win.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return gx.reshape(n, c, h, w), []

    def output_shape(self, input_shape):
        c, h, w = input_shape
        return (c, h // 2, w // 2)


class _Elementwise(Layer):
    def derivative(self, cache) -> np.ndarray:
        raise NotImplementedError

    def backward(self, cache, grad, param_grads=True):
        return grad * self.derivative(cache), []

    def jvp(self, cache, t):
        d = self.derivative(cache)
        return t * d[:, None]

    def vjp_seeds(self, cache, g):
        d = self.derivative(cache)
        return g * d[:, None]


class ReLU(_Elementwise):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def derivative(self, cache):
        return cache.astype(np.float64)


class Sigmoid(_Elementwise):
    kind = "sigmoid"

    def forward(self, x):
        y = sigmoid(x)
        return y, y

    def derivative(self, cache):
        return cache * (1.0 - cache)


class Identity(_Elementwise):
    kind = "identity"

    def forward(self, x):
        return x, x.shape

    def backward(self, cache, grad, param_grads=True):
        return grad, []

    def derivative(self, cache):
        return np.ones(cache)

    def jvp(self, cache, t):
        return t

    def vjp_seeds(self, cache, g):
        return g


class Softmax(Layer):
    """Softmax over the last axis."""

    kind = "softmax"

    def forward(self, x):
        y = softmax(x)
        return y, y

    def backward(self, cache, grad, param_grads=True):
        s = cache
        return s * (grad - np.sum(grad * s, axis=-1, keepdims=True)), []


class Reshape(Layer):
    """Reshape the per-sample part of the tensor (batch axis untouched)."""

    kind = "reshape"

    def __init__(self, shape):
        self.shape = tuple(int(s) for s in shape)

    def forward(self, x):
        per_sample = int(np.prod(x.shape[1:]))
        if per_sample != int(np.prod(self.shape)):
            raise DimensionError(f"cannot reshape sample of shape {x.shape[1:]} to {self.shape}")
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward(self, cache, grad, param_grads=True):
        return grad.reshape(cache), []

    def output_shape(self, input_shape):
        return self.shape

    def config(self):
        return {"kind": self.kind, "shape": list(self.shape)}


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
