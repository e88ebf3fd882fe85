"""Denoising autoencoder and the reconstruction-based confidence score.

The score of an input ``x`` with dimensionality ``D`` is

    score(x) = exp(-alpha / D * ||r(x) - x||) * gate(gamma(x))
    gamma(x) = mean_i(dr_i/dx_i - 1)
    gate(g)  = 1 if g <= 0 else exp(-beta * g)

where ``r`` is the trained autoencoder. ``r(x) - x`` tracks the gradient of
the data log-density and ``dr/dx - I`` its Hessian, so the first factor is
high near any extremum of the density and the gate keeps only maxima.

The Jacobian diagonal has two routes. ``exact`` is reverse-mode: for stacks
of dense and elementwise layers it runs forward tangents through the
encoder and multi-seed reverse passes through the decoder and contracts them
at the code layer, which is the same quantity as D reverse passes through
the whole autoencoder at a fraction of the cost; other stacks fall back to
literally batching those D reverse passes. ``finite_diff`` uses central
differences per coordinate.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .nn import (Adam, Dense, Identity, LayerStack, ReLU, Sigmoid, TiedDense,
                 l2_penalty, squared_error, sum_grads)
from .nn.layers import _Elementwise
from .tensor import Rng, gaussian

# exp() of anything below this underflows; scores are floored here so they stay > 0
SCORE_FLOOR = np.finfo(np.float64).tiny
_TANGENT_BUDGET = 4_000_000


@dataclass
class ConfidenceParams:
    """Hyperparameters of the confidence score.

    ``alpha`` sets how fast the score decays with reconstruction error and
    ``beta`` how strongly positive curvature is penalised.
    """

    alpha: float = 40.0
    beta: float = 5.0
    D: int = 2
    jacobian_method: str = "exact"
    fd_step: float = 1e-4
    use_gate: bool = True

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0 or self.fd_step <= 0:
            raise ParameterError("alpha, beta and fd_step must be positive")
        if self.D < 1:
            raise ParameterError("D must be a positive integer")
        if self.jacobian_method not in ("exact", "finite_diff"):
            raise ParameterError(f"unknown jacobian_method {self.jacobian_method!r}")


@dataclass
class DaeModel:
    encoder: LayerStack
    decoder: LayerStack
    sigma: float = 0.2
    decoder_mode: str = "symmetric"

    @property
    def autoencoder(self) -> LayerStack:
        return LayerStack(self.encoder.layers + self.decoder.layers)

    def params(self) -> list[np.ndarray]:
        return self.autoencoder.params()


@dataclass
class ConfidenceReport:
    """Per-sample terms of the score; fields are floats or equal-length arrays."""

    recon_error: float | np.ndarray
    gamma: float | np.ndarray
    gate: float | np.ndarray
    score: float | np.ndarray


def build_decoder(encoder: LayerStack, mode: str = "symmetric", output: str = "linear",
                  rng: Rng | None = None) -> LayerStack:
    """Mirror the dense layers of ``encoder`` into a decoder.

    ``symmetric`` ties every decoder weight to the transpose of its encoder
    counterpart (only biases are new); ``asymmetric`` allocates fresh
    weights. Hidden decoder layers reuse the encoder's activations in
    reverse order; ``output`` is the activation of the final layer.
    """
    dense = [layer for layer in encoder if isinstance(layer, Dense)]
    if not dense:
        raise ParameterError("encoder has no dense layers to mirror")
    if mode == "symmetric" and len(dense) != sum(1 for l in encoder if l.params()):
        raise ParameterError("symmetric decoders need an all-dense encoder")
    acts = []
    for i, layer in enumerate(encoder.layers):
        if isinstance(layer, Dense):
            nxt = encoder.layers[i + 1] if i + 1 < len(encoder.layers) else None
            acts.append(type(nxt)() if isinstance(nxt, (ReLU, Sigmoid)) else Identity())
    layers = []
    for j, src in enumerate(reversed(dense)):
        if mode == "symmetric":
            layers.append(TiedDense(src))
        elif mode == "asymmetric":
            layers.append(Dense(src.out_features, src.in_features, rng))
        else:
            raise ParameterError(f"unknown decoder mode {mode!r}")
        last = j == len(dense) - 1
        if last:
            layers.append(_output_activation(output))
        else:
            # activation that followed the encoder layer feeding this one
            layers.append(type(acts[len(dense) - 2 - j])())
    return LayerStack(layers)


def _output_activation(name: str):
    if name == "sigmoid":
        return Sigmoid()
    if name == "linear":
        return Identity()
    raise ParameterError(f"unknown output activation {name!r}")


def build_dense_dae(input_dim: int, hidden: Sequence[int], rng: Rng, sigma: float = 0.2,
                    decoder_mode: str = "symmetric", output: str = "linear") -> DaeModel:
    layers = []
    width = input_dim
    for h in hidden:
        layers += [Dense(width, h, rng), ReLU()]
        width = h
    encoder = LayerStack(layers)
    return DaeModel(encoder, build_decoder(encoder, decoder_mode, output, rng), sigma,
                    decoder_mode)


def corrupt(x: np.ndarray, sigma: float, rng: Rng) -> np.ndarray:
    """Additive Gaussian corruption; values are not clipped."""
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + gaussian(rng, x.shape, 0.0, sigma)


def _batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    return (x[None, :] if single else x.reshape(x.shape[0], -1)), single


def reconstruct(model: DaeModel, x) -> np.ndarray:
    xb, single = _batch(x)
    r, _ = model.decoder.run(model.encoder.run(xb)[0])
    r = r.reshape(xb.shape)
    return r[0] if single else r


def recon_errors(model: DaeModel, X) -> np.ndarray:
    """``||r(x) - x||`` for each row of ``X``."""
    xb, _ = _batch(X)
    diff = reconstruct(model, xb) - xb
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def recon_error(model: DaeModel, x) -> float:
    return float(recon_errors(model, np.asarray(x).reshape(1, -1))[0])


# ---------------------------------------------------------------- Jacobian

def _dense_matrix(layer) -> np.ndarray:
    """Matrix M with layer(x) = x @ M + b."""
    return layer.W if isinstance(layer, Dense) else layer.source.W.T


def _supports_fast_path(stack: LayerStack) -> bool:
    return all(isinstance(l, (Dense, TiedDense, _Elementwise)) for l in stack)


def _encoder_tangents(encoder: LayerStack, tape, n: int, d: int):
    """d(features)/dx as [N, D, h], or ('diag', [N, D]) if still diagonal."""
    diag = np.ones((n, d))
    full = None
    for layer, cache in zip(encoder.layers, tape):
        if isinstance(layer, _Elementwise):
            if full is None:
                diag = diag * layer.derivative(cache)
            else:
                full = layer.jvp(cache, full)
        elif full is None:
            full = diag[:, :, None] * _dense_matrix(layer)[None]
        else:
            full = layer.jvp(cache, full)
    return full if full is not None else ("diag", diag)


def _decoder_cotangents(decoder: LayerStack, tape, n: int, d: int):
    """d r_i / d(features) for every output i, as [N, D, h] (or diagonal)."""
    diag = np.ones((n, d))
    full = None
    for layer, cache in zip(reversed(decoder.layers), reversed(tape)):
        if isinstance(layer, _Elementwise):
            if full is None:
                diag = diag * layer.derivative(cache)
            else:
                full = layer.vjp_seeds(cache, full)
        elif full is None:
            full = diag[:, :, None] * _dense_matrix(layer).T[None]
        else:
            full = layer.vjp_seeds(cache, full)
    return full if full is not None else ("diag", diag)


def _contract(enc, dec) -> np.ndarray:
    if isinstance(enc, tuple) and isinstance(dec, tuple):
        return enc[1] * dec[1]
    if isinstance(enc, tuple):
        return enc[1] * np.einsum("nii->ni", dec)
    if isinstance(dec, tuple):
        return dec[1] * np.einsum("nii->ni", enc)
    return np.einsum("nik,nik->ni", enc, dec)


def _jacobian_diag_fast(model: DaeModel, X: np.ndarray) -> np.ndarray:
    n, d = X.shape
    width = max([d] + [l.out_features for l in model.encoder if hasattr(l, "out_features")])
    chunk = max(1, _TANGENT_BUDGET // (d * width))
    out = np.empty((n, d))
    for s in range(0, n, chunk):
        xb = X[s:s + chunk]
        feats, etape = model.encoder.run(xb)
        _, dtape = model.decoder.run(feats)
        enc = _encoder_tangents(model.encoder, etape, xb.shape[0], d)
        dec = _decoder_cotangents(model.decoder, dtape, xb.shape[0], d)
        out[s:s + chunk] = _contract(enc, dec)
    return out


def _jacobian_diag_reverse(model: DaeModel, X: np.ndarray) -> np.ndarray:
    """D reverse passes per sample, batched as D copies of the sample."""
    n, d = X.shape
    ae = model.autoencoder
    seeds = np.eye(d)
    out = np.empty((n, d))
    for i in range(n):
        _, tape = ae.run(np.repeat(X[i:i + 1], d, axis=0))
        _, gin = ae.backprop(tape, seeds, param_grads=False)
        out[i] = np.diagonal(gin.reshape(d, d))
    return out


def _jacobian_diag_fd(model: DaeModel, X: np.ndarray, h: float) -> np.ndarray:
    n, d = X.shape
    out = np.empty((n, d))
    eye = np.eye(d) * h
    for i in range(n):
        plus = reconstruct(model, X[i] + eye)
        minus = reconstruct(model, X[i] - eye)
        out[i] = (np.diagonal(plus) - np.diagonal(minus)) / (2 * h)
    return out


def jacobian_diags(model: DaeModel, X, params: ConfidenceParams) -> np.ndarray:
    """Rows of ``dr_i/dx_i`` for a batch, shape ``[N, D]``."""
    xb, _ = _batch(X)
    if xb.shape[1] != params.D:
        raise DimensionError(f"inputs have {xb.shape[1]} dims, params say D={params.D}")
    if params.jacobian_method == "finite_diff":
        return _jacobian_diag_fd(model, xb, params.fd_step)
    if _supports_fast_path(model.encoder) and _supports_fast_path(model.decoder):
        return _jacobian_diag_fast(model, xb)
    return _jacobian_diag_reverse(model, xb)


def jacobian_diag(model: DaeModel, x, params: ConfidenceParams) -> np.ndarray:
    return jacobian_diags(model, np.asarray(x).reshape(1, -1), params)[0]


def gammas(model: DaeModel, X, params: ConfidenceParams) -> np.ndarray:
    return np.mean(jacobian_diags(model, X, params) - 1.0, axis=1)


def gamma(model: DaeModel, x, params: ConfidenceParams) -> float:
    return float(gammas(model, np.asarray(x).reshape(1, -1), params)[0])


def gate(gamma_value, beta: float):
    """Curvature gate: 1 for non-positive curvature, ``exp(-beta*gamma)`` above."""
    if beta <= 0:
        raise ParameterError("beta must be positive")
    g = np.asarray(gamma_value, dtype=np.float64)
    out = np.exp(-beta * np.maximum(g, 0.0))
    return float(out) if out.ndim == 0 else out


def distance_factor(recon_error, alpha: float, D: int):
    """``exp(-alpha/D * recon_error)``, the score before gating."""
    out = np.maximum(np.exp(-alpha / D * np.asarray(recon_error, dtype=np.float64)), SCORE_FLOOR)
    return float(out) if out.ndim == 0 else out


def confidence_batch(model: DaeModel, X, params: ConfidenceParams) -> ConfidenceReport:
    xb, _ = _batch(X)
    err = recon_errors(model, xb)
    gam = gammas(model, xb, params)
    g = gate(gam, params.beta) if params.use_gate else np.ones_like(gam)
    score = np.maximum(distance_factor(err, params.alpha, params.D) * g, SCORE_FLOOR)
    return ConfidenceReport(err, gam, np.asarray(g), score)


def confidence(model: DaeModel, x, params: ConfidenceParams) -> ConfidenceReport:
    rep = confidence_batch(model, np.asarray(x).reshape(1, -1), params)
    return ConfidenceReport(*(float(np.asarray(v)[0]) for v in
                              (rep.recon_error, rep.gamma, rep.gate, rep.score)))


def weight_matrices(params: list[np.ndarray]) -> list[np.ndarray]:
    """Parameters penalised by L2: everything with two or more axes."""
    return [p for p in params if p.ndim >= 2]


def iterate_minibatches(n: int, batch_size: int, rng: Rng):
    order = rng.permutation(n)
    for s in range(0, n, batch_size):
        yield order[s:s + batch_size]


def train_dae(model: DaeModel, data, epochs: int, batch_size: int, rng: Rng,
              l2_lambda: float = 0.0, optimizer: Adam | None = None,
              max_steps: int | None = None) -> tuple[DaeModel, list[float]]:
    """Fit ``r(corrupt(x)) ~ x`` by Adam on mean per-sample squared error.

    Returns the model (trained in place) and the per-step loss, L2 term
    included. ``max_steps`` caps the number of updates across epochs.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ParameterError("training data must be a non-empty [N, D] array")
    params = model.params()
    opt = optimizer or Adam(params)
    shuffle_rng, noise_rng = rng.derive(0), rng.derive(1)
    weights = weight_matrices(params)
    losses: list[float] = []
    for _ in range(epochs):
        for idx in iterate_minibatches(data.shape[0], batch_size, shuffle_rng):
            if max_steps is not None and len(losses) >= max_steps:
                return model, losses
            x = data[idx]
            xc = corrupt(x, model.sigma, noise_rng)
            feats, etape = model.encoder.run(xc)
            recon, dtape = model.decoder.run(feats)
            loss, g = squared_error(recon, x)
            pairs, gf = model.decoder.backprop(dtape, g)
            grads = sum_grads(pairs)
            pairs, _ = model.encoder.backprop(etape, gf)
            sum_grads(pairs, grads)
            if l2_lambda:
                l2, l2g = l2_penalty(weights, l2_lambda)
                loss += l2
                sum_grads(zip(weights, l2g), grads)
            opt.step(grads)
            losses.append(loss)
    return model, losses


def recon_error_input_grad(model: DaeModel, x: np.ndarray) -> tuple[float, np.ndarray]:
    """``||r(x) - x||`` for one sample and its gradient with respect to ``x``."""
    xb = x.reshape(1, -1)
    feats, etape = model.encoder.run(xb)
    recon, dtape = model.decoder.run(feats)
    diff = (recon - xb).ravel()
    err = math.sqrt(float(diff @ diff))
    if err == 0.0:
        return 0.0, np.zeros_like(x)
    u = (diff / err).reshape(1, -1)
    _, gf = model.decoder.backprop(dtape, u, param_grads=False)
    _, gx = model.encoder.backprop(etape, gf, param_grads=False)
    return err, (gx.ravel() - u.ravel()).reshape(x.shape)
