"""Central finite-difference checks of every backward pass.

Errors are reported per parameter tensor (and for the input gradient) as
``||analytic - numeric|| / max(||analytic||, ||numeric||)``, the worst over
all tensors and instances.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .classifier import LossWeights, ModelSpec, build_model, joint_loss
from .nn import (Conv2D, Dense, Layer, LayerStack, MaxPool2x2, ReLU, Sigmoid, Softmax,
                 TiedDense)
from .errors import StateError
from .tensor import Rng

STEP = 1e-5
# large joint-model tensors are spot-checked on this many random entries
MAX_COORDS = 48
LAYER_KINDS = ("dense", "tied_dense", "conv2d", "maxpool2x2", "relu", "sigmoid", "softmax")


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b)) / denom


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = STEP,
                 coords: np.ndarray | None = None) -> np.ndarray:
    """Central differences of ``f`` with respect to ``arr`` (perturbed in place).

    With ``coords`` only those flat positions are differenced and a 1-D
    array of matching length is returned.
    """
    flat = arr.reshape(-1)
    if coords is None:
        out = np.zeros_like(arr)
        gflat, todo = out.reshape(-1), range(flat.size)
    else:
        out = gflat = np.zeros(len(coords))
        todo = coords
    for j, i in enumerate(todo):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[j if coords is not None else i] = (fp - fm) / (2 * h)
    return out


def _make_layer(kind: str, rng: Rng) -> tuple[list[Layer], tuple[int, ...]]:
    if kind == "dense":
        return [Dense(5, 4, rng)], (3, 5)
    if kind == "tied_dense":
        return [TiedDense(Dense(4, 5, rng))], (3, 5)
    if kind == "conv2d":
        return [Conv2D(2, 3, 3, rng)], (2, 2, 6, 6)
    if kind == "maxpool2x2":
        return [MaxPool2x2()], (2, 2, 4, 6)
    if kind == "relu":
        return [ReLU()], (4, 6)
    if kind == "sigmoid":
        return [Sigmoid()], (4, 6)
    if kind == "softmax":
        return [Softmax()], (4, 6)
    raise ValueError(f"unknown layer kind {kind!r}")


def check_layer(kind: str, rng: Rng) -> float:
    """Worst relative error for one random instance of a layer kind.

    The scalar checked is ``sum(w * layer(x))`` for a random weighting ``w``.
    """
    layers, in_shape = _make_layer(kind, rng)
    stack = LayerStack(layers)
    for p in stack.params():
        p += rng.normal(p.shape, 0.0, 0.1)
    if kind == "tied_dense":
        layers[0].source.W += rng.normal(layers[0].source.W.shape, 0.0, 0.3)
    x = rng.normal(in_shape)
    y = stack.forward(x, mode="train")
    w = rng.normal(y.shape)
    pairs, gx = stack.backward(w)

    def f():
        return float(np.sum(w * stack.run(x)[0]))

    worst = rel_error(gx, numeric_grad(f, x))
    seen: dict[int, np.ndarray] = {}
    for p, g in pairs:
        seen[id(p)] = seen.get(id(p), 0) + g
    arrays = {id(p): p for p, _ in pairs}
    for pid, g in seen.items():
        worst = max(worst, rel_error(g, numeric_grad(f, arrays[pid])))
    return worst


KINK_MARGIN = 1e-3


def kink_margin(stack: LayerStack, x: np.ndarray) -> float:
    """Distance of an input to the nearest non-differentiable point of ``stack``.

    Measured as the smallest ``|pre-activation|`` entering a ReLU and the
    smallest gap between the two largest values of a pooling window.
    Finite differences straddling such a point compare against a one-sided
    slope, so checks are only meaningful where this margin is comfortably
    larger than the step.
    """
    margin = np.inf
    for layer in stack.layers:
        if isinstance(layer, ReLU):
            margin = min(margin, float(np.min(np.abs(x))))
        elif isinstance(layer, MaxPool2x2):
            n, c, h, w = x.shape
            win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
            top = np.sort(win.reshape(n, c, h // 2, w // 2, 4), axis=-1)
            gap = top[..., -1] - top[..., -2]
            # all-zero windows behind a ReLU stay zero under small perturbations
            live = top[..., -1] != 0.0
            if live.any():
                margin = min(margin, float(np.min(gap[live])))
        x, _ = layer.forward(x)
    return margin


def check_joint(rng: Rng, variant: str = "dae", decoder_mode: str = "symmetric",
                architecture: str = "dense") -> float:
    """Worst relative error of the joint loss gradient for one random model."""
    if architecture == "cnn":
        spec = ModelSpec(input_dim=256, hidden=(6,), num_classes=3, variant=variant,
                         architecture="cnn", decoder_mode="asymmetric", omega=2,
                         image_shape=(1, 16, 16), conv_channels=(2, 3))
    else:
        spec = ModelSpec(input_dim=6, hidden=(5, 4), num_classes=3, variant=variant,
                         decoder_mode=decoder_mode, omega=2)
    model = build_model(spec, rng, sigma=0.2)
    for p in model.params():
        p += rng.normal(p.shape, 0.0, 0.2)
    n = 2 if architecture == "cnn" else 4
    # redraw inputs until neither the clean nor the corrupted batch sits on a kink
    for _ in range(1000):
        X = rng.uniform((n, spec.input_dim))
        Xc = X + rng.normal(X.shape, 0.0, 0.2)
        if min(kink_margin(model.encoder, X), kink_margin(model.encoder, Xc)) > KINK_MARGIN:
            break
    else:
        raise StateError("could not draw a gradient-check batch away from every kink")
    labels = rng.integers(0, spec.num_classes, n)
    weights = LossWeights(rec=1.0, l2=0.01)
    _, _, grads = joint_loss(model, X, labels, Xc, weights)

    def f():
        return joint_loss(model, X, labels, Xc, weights)[0]

    worst = 0.0
    for p in model.params():
        g = grads.get(id(p), np.zeros_like(p)).reshape(-1)
        coords = None
        if p.size > MAX_COORDS:
            coords = np.sort(rng.choice(p.size, MAX_COORDS, replace=False))
            g = g[coords]
        worst = max(worst, rel_error(g, numeric_grad(f, p, coords=coords).reshape(-1)))
    return worst


@dataclass
class GradcheckRow:
    target: str
    instances: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < 1e-4


JOINT_TARGETS = {
    "joint_plain": dict(variant="plain"),
    "joint_cool": dict(variant="cool"),
    "joint_dae_sym": dict(variant="dae", decoder_mode="symmetric"),
    "joint_dae_asym": dict(variant="dae", decoder_mode="asymmetric"),
    "joint_dae_cnn": dict(variant="dae", architecture="cnn"),
}


def run_all(rng: Rng, instances: int = 10) -> list[GradcheckRow]:
    rows = []
    for i, kind in enumerate(LAYER_KINDS):
        errs = [check_layer(kind, rng.derive(i, j)) for j in range(instances)]
        rows.append(GradcheckRow(kind, instances, max(errs)))
    for i, (name, kw) in enumerate(JOINT_TARGETS.items()):
        errs = [check_joint(rng.derive(100 + i, j), **kw) for j in range(instances)]
        rows.append(GradcheckRow(name, instances, max(errs)))
    return rows
