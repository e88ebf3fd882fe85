"""Classifier sharing its encoder with a denoising autoencoder.

Three variants share one construction path so comparisons differ only in
what sits on top of the encoder:

``plain``  softmax head; confidence is the largest class posterior.
``cool``   COOL head; confidence is the COOL score of the predicted class.
``dae``    softmax head plus decoder; confidence is the autoencoder score and
           the reported outputs are the posteriors scaled by it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dae as dae_ops
from .dae import ConfidenceParams, DaeModel
from .errors import DimensionError, ParameterError
from .nn import (Adam, Conv2D, CoolHead, Dense, LayerStack, MaxPool2x2, ReLU, Reshape,
                 cool_from_logits, cool_targets, l2_penalty, softmax,
                 softmax_cross_entropy, squared_error, sum_grads)
from .tensor import Rng

VARIANTS = ("plain", "cool", "dae")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor, enough to rebuild a model's parameter layout."""

    input_dim: int = 784
    hidden: tuple[int, ...] = (400,)
    num_classes: int = 10
    variant: str = "dae"
    architecture: str = "dense"
    decoder_mode: str = "symmetric"
    output_activation: str = "sigmoid"
    omega: int = 10
    image_shape: tuple[int, int, int] = (1, 28, 28)
    conv_channels: tuple[int, int] = (32, 64)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.architecture not in ("dense", "cnn"):
            raise ParameterError(f"unknown architecture {self.architecture!r}")
        if self.num_classes < 1 or self.input_dim < 1:
            raise ParameterError("num_classes and input_dim must be positive")


@dataclass
class LossWeights:
    rec: float = 1.0
    l2: float = 0.0


@dataclass
class Prediction:
    y: np.ndarray
    y_scaled: np.ndarray
    confidence: np.ndarray
    argmax: np.ndarray


@dataclass
class JointModel:
    spec: ModelSpec
    encoder: LayerStack
    head: LayerStack | CoolHead
    decoder: LayerStack | None
    conf: ConfidenceParams
    sigma: float = 0.2
    history: dict = field(default_factory=dict)

    @property
    def variant(self) -> str:
        return self.spec.variant

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def dae(self) -> DaeModel | None:
        if self.decoder is None:
            return None
        return DaeModel(self.encoder, self.decoder, self.sigma, self.spec.decoder_mode)

    def params(self) -> list[np.ndarray]:
        stacks = [self.encoder, self.head_stack]
        if self.decoder is not None:
            stacks.append(self.decoder)
        return LayerStack([l for s in stacks for l in s]).params()

    @property
    def head_stack(self) -> LayerStack:
        if isinstance(self.head, CoolHead):
            return LayerStack([self.head.logits_layer])
        return self.head

    def logits(self, X) -> np.ndarray:
        return self.head_stack.run(self.encoder.run(_as_batch(X, self.spec))[0])[0]


def _as_batch(X, spec: ModelSpec) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    X = X.reshape(X.shape[0], -1)
    if X.shape[1] != spec.input_dim:
        raise DimensionError(f"model expects {spec.input_dim} inputs, got {X.shape[1]}")
    return X


def _cnn_encoder(spec: ModelSpec, rng: Rng) -> LayerStack:
    c, h, w = spec.image_shape
    if c * h * w != spec.input_dim:
        raise ParameterError("image_shape does not match input_dim")
    c1, c2 = spec.conv_channels
    layers = [Reshape(spec.image_shape), Conv2D(c, c1, 5, rng), ReLU(), MaxPool2x2(),
              Conv2D(c1, c2, 5, rng), ReLU(), MaxPool2x2()]
    shape = LayerStack(layers).output_shape(spec.image_shape)
    flat = int(np.prod(shape))
    feat = spec.hidden[-1] if spec.hidden else 400
    layers += [Reshape((flat,)), Dense(flat, feat, rng), ReLU()]
    return LayerStack(layers)


def build_model(spec: ModelSpec, rng: Rng, conf: ConfidenceParams | None = None,
                sigma: float = 0.2) -> JointModel:
    """Initialise a model. Encoder and head draws come first and in the same
    order for every variant, so equal seeds give equal shared weights."""
    if spec.architecture == "dense":
        layers, width = [], spec.input_dim
        for h in spec.hidden:
            layers += [Dense(width, h, rng), ReLU()]
            width = h
        encoder = LayerStack(layers)
    else:
        encoder = _cnn_encoder(spec, rng)
        width = encoder.output_shape(spec.image_shape)[0]
    if spec.variant == "cool":
        head = CoolHead(width, spec.num_classes, spec.omega, rng)
    else:
        head = LayerStack([Dense(width, spec.num_classes, rng)])
    decoder = None
    if spec.variant == "dae":
        if spec.architecture == "dense":
            decoder = dae_ops.build_decoder(encoder, spec.decoder_mode,
                                            spec.output_activation, rng)
        else:
            if spec.decoder_mode != "asymmetric":
                raise ParameterError("the convolutional encoder needs an asymmetric decoder")
            decoder = LayerStack([Dense(width, spec.input_dim, rng),
                                  dae_ops._output_activation(spec.output_activation)])
    conf = conf or ConfidenceParams(D=spec.input_dim)
    if conf.D != spec.input_dim:
        conf = replace(conf, D=spec.input_dim)
    return JointModel(spec, encoder, head, decoder, conf, sigma)


# ------------------------------------------------------------- inference

def predict(model: JointModel, X) -> Prediction:
    """Class posteriors, confidence-scaled outputs and the confidence channel.

    Argmax ties resolve to the lowest class index.
    """
    xb = _as_batch(X, model.spec)
    feats, _ = model.encoder.run(xb)
    logits, _ = model.head_stack.run(feats)
    if model.variant == "cool":
        y, cool_conf = cool_from_logits(logits, model.num_classes, model.spec.omega)
        am = np.argmax(y, axis=1)
        conf = cool_conf[np.arange(len(am)), am]
        return Prediction(y, cool_conf, conf, am)
    y = softmax(logits)
    am = np.argmax(y, axis=1)
    if model.variant == "plain":
        conf = y[np.arange(len(am)), am]
        return Prediction(y, y.copy(), conf, am)
    rep = dae_ops.confidence_batch(model.dae, xb, model.conf)
    conf = np.asarray(rep.score)
    return Prediction(y, conf[:, None] * y, conf, am)


def thresholded_accuracy_from(pred: Prediction, labels, threshold: float) -> float:
    labels = np.asarray(labels)
    ok = (pred.argmax == labels) & (pred.confidence > threshold)
    return float(np.mean(ok)) if len(labels) else 0.0


def thresholded_accuracy(model: JointModel, inputs, labels, threshold: float) -> float:
    """Fraction of samples classified correctly with confidence above ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ParameterError("threshold must lie in [0, 1]")
    return thresholded_accuracy_from(predict(model, inputs), labels, threshold)


# -------------------------------------------------------------- training

def joint_loss(model: JointModel, X: np.ndarray, labels: np.ndarray,
               X_corrupt: np.ndarray | None, weights: LossWeights
               ) -> tuple[float, dict[str, float], dict[int, np.ndarray]]:
    """Loss and parameter gradients for one minibatch.

    The head reads features of the clean batch; the decoder reads features
    of ``X_corrupt`` and is scored against the clean batch. Both halves go
    through the encoder as one concatenated batch.
    """
    n = X.shape[0]
    use_rec = model.decoder is not None and weights.rec != 0 and X_corrupt is not None
    xin = np.concatenate([X, X_corrupt]) if use_rec else X
    feats, etape = model.encoder.run(xin)
    logits, htape = model.head_stack.run(feats[:n])
    if model.variant == "cool":
        targets = cool_targets(labels, model.num_classes, model.spec.omega)
    else:
        targets = labels
    ce, g_logits = softmax_cross_entropy(logits, targets)
    pairs, g_feat = model.head_stack.backprop(htape, g_logits)
    grads = sum_grads(pairs)
    parts = {"ce": ce}
    total = ce
    if use_rec:
        recon, dtape = model.decoder.run(feats[n:])
        rec, g_rec = squared_error(recon, X)
        pairs, g_dec = model.decoder.backprop(dtape, weights.rec * g_rec)
        sum_grads(pairs, grads)
        g_feat = np.concatenate([g_feat, g_dec])
        parts["rec"] = rec
        total += weights.rec * rec
    pairs, _ = model.encoder.backprop(etape, g_feat)
    sum_grads(pairs, grads)
    if weights.l2:
        w = dae_ops.weight_matrices(model.params())
        l2, l2g = l2_penalty(w, weights.l2)
        sum_grads(zip(w, l2g), grads)
        parts["l2"] = l2
        total += l2
    return total, parts, grads


def train_joint(model: JointModel, inputs, labels, epochs: int, batch_size: int, rng: Rng,
                loss_weights: LossWeights | None = None, eta: float = 1e-3,
                max_steps: int | None = None) -> tuple[JointModel, list[float]]:
    """Minibatch Adam on the joint loss; returns the model and per-step losses.

    Shuffling and corruption noise come from separate children of ``rng``,
    so the batch order does not depend on the variant.
    """
    weights = loss_weights or LossWeights()
    X = _as_batch(inputs, model.spec)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape[0] != X.shape[0]:
        raise DimensionError("inputs and labels differ in length")
    if y.size and (y.min() < 0 or y.max() >= model.num_classes):
        raise ParameterError(f"labels must lie in [0, {model.num_classes})")
    opt = Adam(model.params(), eta=eta)
    shuffle_rng, noise_rng = rng.derive(0), rng.derive(1)
    losses: list[float] = []
    for _ in range(epochs):
        for idx in dae_ops.iterate_minibatches(X.shape[0], batch_size, shuffle_rng):
            if max_steps is not None and len(losses) >= max_steps:
                break
            xb = X[idx]
            xc = None
            if model.decoder is not None and weights.rec != 0:
                xc = dae_ops.corrupt(xb, model.sigma, noise_rng)
            loss, _, grads = joint_loss(model, xb, y[idx], xc, weights)
            opt.step(grads)
            losses.append(loss)
    model.history.setdefault("losses", []).extend(losses)
    return model, losses
