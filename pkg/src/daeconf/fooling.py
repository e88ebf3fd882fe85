"""Fooling attack against a frozen classifier.

A fooling generator network (FGN) is a single dense layer with a sigmoid,
mapping a fixed random input ``z`` to an image in ``(0, 1)^D``. Its weights
are trained by plain SGD to minimise the cross-entropy between a signal of
the frozen target and a one-hot class ``k``; an attempt succeeds as soon as
the class-``k`` output the target *reports* exceeds the threshold.

The loss signal is either the raw posteriors ``y`` or the confidence-scaled
outputs. Success is always judged on the reported outputs: ``y`` for the
plain model, the COOL confidences for COOL, and ``score * y`` for the dae
model.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dae as dae_ops
from .classifier import JointModel, _as_batch
from .errors import ParameterError
from .nn import Sigmoid, cool_from_logits, softmax
from .tensor import Rng

TARGETS = ("unscaled_y", "scaled_y")


@dataclass
class FoolingConfig:
    trials_per_class: int = 20
    max_updates: int = 10_000
    threshold: float = 0.9
    eta: float = 1e-5
    target: str = "unscaled_y"

    def __post_init__(self):
        if self.trials_per_class < 1 or self.max_updates < 1 or self.eta <= 0:
            raise ParameterError("trials_per_class, max_updates and eta must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ParameterError("threshold must lie in (0, 1)")
        if self.target not in TARGETS:
            raise ParameterError(f"target must be one of {TARGETS}")


class Fgn:
    """``sigmoid(z @ W + b)`` with square ``W`` and a fixed input ``z``.

    Because ``z`` never changes, every SGD update of ``W`` is the rank-one
    matrix ``outer(z, g)``. The pre-activation therefore moves by
    ``(z @ z + 1) * g`` per step (weights plus bias), which is tracked
    directly; ``weights()`` materialises ``W`` and ``b`` on request.
    """

    def __init__(self, dim: int, rng: Rng, init_scale: float = 0.01):
        self.W0 = rng.uniform((dim, dim), -init_scale, init_scale)
        self.z = rng.uniform((1, dim), 0.0, 1.0)
        self.act = Sigmoid()
        self._zz = float(self.z[0] @ self.z[0])
        self._step_sum = np.zeros(dim)
        self._pre = (self.z @ self.W0)[0]

    def forward(self):
        img, scache = self.act.forward(self._pre[None, :])
        return img[0], scache

    def sgd_step(self, cache, grad_img: np.ndarray, eta: float) -> None:
        g, _ = self.act.backward(cache, grad_img.reshape(1, -1))
        step = eta * g[0]
        self._step_sum += step
        self._pre = self._pre - (self._zz + 1.0) * step

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        return self.W0 - np.outer(self.z[0], self._step_sum), -self._step_sum.copy()


@dataclass
class AttemptResult:
    success: bool
    steps: int
    sample: np.ndarray


@dataclass
class FoolingReport:
    successes: np.ndarray
    trials_per_class: int
    steps: np.ndarray = field(repr=False)
    succeeded: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)

    @property
    def rate(self) -> float:
        return float(self.successes.sum()) / (self.trials_per_class * len(self.successes))

    @property
    def mean_steps(self) -> float | None:
        """Mean steps over successful attempts; ``None`` when nothing succeeded."""
        if not self.succeeded.any():
            return None
        return float(self.steps[self.succeeded].mean())


def reported_score(model: JointModel, image: np.ndarray, k: int, threshold: float) -> float:
    """Class-``k`` value of the target's reported outputs for one image.

    For the dae model the curvature gate (which needs the Jacobian) is only
    evaluated when the ungated value could still clear ``threshold``.
    """
    x = _as_batch(image, model.spec)
    logits = model.logits(x)
    if model.variant == "cool":
        return float(cool_from_logits(logits, model.num_classes, model.spec.omega)[1][0, k])
    yk = float(softmax(logits)[0, k])
    if model.variant == "plain":
        return yk
    err = dae_ops.recon_error(model.dae, x[0])
    bound = dae_ops.distance_factor(err, model.conf.alpha, model.conf.D) * yk
    if bound <= threshold or not model.conf.use_gate:
        return bound
    gam = dae_ops.gamma(model.dae, x[0], model.conf)
    return bound * dae_ops.gate(gam, model.conf.beta)


def signal_loss_grad(model: JointModel, image: np.ndarray, k: int, target: str
                     ) -> tuple[float, np.ndarray]:
    """Cross-entropy of the chosen signal against class ``k`` and its input gradient.

    With ``scaled_y`` on the dae model the loss is ``-log(score * y_k)``;
    the gate is held constant when differentiating.
    """
    x = _as_batch(image, model.spec)
    feats, etape = model.encoder.run(x)
    logits, htape = model.head_stack.run(feats)
    if model.variant == "cool":
        omega = model.spec.omega
        p = softmax(logits)[0]
        member = np.zeros_like(p)
        member[k * omega:(k + 1) * omega] = 1.0
        if target == "scaled_y":
            # -log(omega^omega * prod p_j) over members of k
            loss = -(omega * math.log(omega) + np.log(np.clip(p[member > 0], 1e-300, None)).sum())
            g_logits = omega * p - member
        else:
            s = float(p[member > 0].sum())
            loss = -math.log(max(s, 1e-300))
            g_logits = p - member * p / s
    else:
        p = softmax(logits)[0]
        loss = -math.log(max(float(p[k]), 1e-300))
        g_logits = p.copy()
        g_logits[k] -= 1.0
    _, gf = model.head_stack.backprop(htape, g_logits[None, :], param_grads=False)
    _, gx = model.encoder.backprop(etape, gf, param_grads=False)
    gx = gx.ravel()
    if target == "scaled_y" and model.variant == "dae":
        err, gerr = dae_ops.recon_error_input_grad(model.dae, x[0])
        a = model.conf.alpha / model.conf.D
        loss += a * err
        gx = gx + a * gerr.ravel()
    return float(loss), gx


def fooling_attempt(target: JointModel, class_k: int, config: FoolingConfig, rng: Rng
                    ) -> AttemptResult:
    """Run one FGN until the target reports class ``k`` above threshold.

    Step ``t`` evaluates the current FGN output and, if that fails, applies
    one SGD update; a target fooled by the initial image succeeds at step 1.
    """
    fgn = Fgn(target.spec.input_dim, rng)
    img = None
    for step in range(1, config.max_updates + 1):
        img, cache = fgn.forward()
        if reported_score(target, img, class_k, config.threshold) > config.threshold:
            return AttemptResult(True, step, img)
        _, g = signal_loss_grad(target, img, class_k, config.target)
        fgn.sgd_step(cache, g, config.eta)
    img, _ = fgn.forward()
    return AttemptResult(False, config.max_updates, img)


def _attempt_job(args):
    target, k, config, rng = args
    return fooling_attempt(target, k, config, rng)


def fooling_campaign(target: JointModel, config: FoolingConfig, rng: Rng,
                     workers: int = 1, classes=None) -> FoolingReport:
    """``trials_per_class`` attempts for every class with per-attempt seeds.

    Attempt ``(k, t)`` always uses ``rng.derive(k, t)``, so the report does
    not depend on ``workers``.
    """
    classes = list(range(target.num_classes)) if classes is None else list(classes)
    jobs = [(target, k, config, rng.derive(k, t))
            for k in classes for t in range(config.trials_per_class)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_attempt_job, jobs))
    else:
        results = [_attempt_job(j) for j in jobs]
    succ = np.array([r.success for r in results])
    steps = np.array([r.steps for r in results])
    per_class = succ.reshape(len(classes), config.trials_per_class).sum(axis=1)
    samples = np.stack([r.sample for r in results])
    return FoolingReport(per_class, config.trials_per_class, steps, succ, samples)
