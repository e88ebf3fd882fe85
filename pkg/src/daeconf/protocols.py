"""Experiment protocols: 2D rings, fooling, open-set and 1-class recognition.

Every protocol derives its random streams from one master ``Rng`` by fixed
keys, so repetitions can run in any order or process and give the same
numbers. Model initialisation keys never include the variant: the plain,
COOL and dae models of one repetition start from the same encoder weights
and see the same training subset.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dae as dae_ops
from .classifier import (JointModel, LossWeights, ModelSpec, build_model, predict,
                         thresholded_accuracy_from, train_joint)
from .dae import ConfidenceParams
from .datasets import (DigitDataset, RingSpec, sample_background,
                       sample_rings)
from .errors import ParameterError
from .fooling import FoolingConfig, FoolingReport, fooling_campaign
from .metrics import RocCurve, average_roc, open_set_counts, openness, roc_and_auc
from .tensor import Rng

# derive() keys, one namespace per purpose
_K_SUBSET, _K_DATA, _K_INIT, _K_TRAIN, _K_ATTACK = 11, 12, 13, 14, 15


@dataclass
class TrainSettings:
    """Architecture and optimisation settings shared by the digit protocols."""

    hidden: tuple[int, ...] = (400,)
    architecture: str = "dense"
    decoder_mode: str = "symmetric"
    epochs: int = 20
    batch_size: int = 64
    eta: float = 1e-3
    lambda_rec: float = 1.0
    lambda_l2: float = 0.0
    sigma: float = 0.2
    alpha: float = 20.0
    beta: float = 10.0
    use_gate: bool = True
    jacobian_method: str = "exact"
    omega: int = 10
    max_train: int | None = 2000
    # train smaller subsets for proportionally more epochs, so every model
    # gets the update budget of a full ``max_train`` subset
    equal_updates: bool = True

    def spec(self, variant: str, input_dim: int, num_classes: int = 10,
             output_activation: str = "sigmoid") -> ModelSpec:
        return ModelSpec(input_dim=input_dim, hidden=tuple(self.hidden),
                         num_classes=num_classes, variant=variant,
                         architecture=self.architecture, decoder_mode=self.decoder_mode,
                         output_activation=output_activation, omega=self.omega)

    def conf(self, input_dim: int) -> ConfidenceParams:
        return ConfidenceParams(alpha=self.alpha, beta=self.beta, D=input_dim,
                                jacobian_method=self.jacobian_method, use_gate=self.use_gate)

    def epochs_for(self, n: int) -> int:
        if self.equal_updates and self.max_train and 0 < n < self.max_train:
            return max(1, round(self.epochs * self.max_train / n))
        return self.epochs

    def fit(self, variant: str, X: np.ndarray, y: np.ndarray, init_rng: Rng, train_rng: Rng,
            num_classes: int = 10) -> JointModel:
        model = build_model(self.spec(variant, X.shape[1], num_classes), init_rng,
                            self.conf(X.shape[1]), self.sigma)
        train_joint(model, X, y, self.epochs_for(X.shape[0]), self.batch_size, train_rng,
                    LossWeights(self.lambda_rec, self.lambda_l2), eta=self.eta)
        return model


def _map(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


# ------------------------------------------------------------------ rings

@dataclass
class RingSettings:
    ring: RingSpec = field(default_factory=RingSpec)
    hidden: tuple[int, ...] = (200, 200)
    alpha: float = 40.0
    beta: float = 5.0
    sigma: float = 0.2
    batch_size: int = 64
    steps: int = 10_000
    eta: float = 1e-3
    lambda_rec: float = 1.0
    decoder_mode: str = "symmetric"
    heldout_per_ring: int = 500
    background_points: int = 3000
    background_distance: float = 0.5


@dataclass
class RingResult:
    model: JointModel
    losses: list[float]
    train: tuple[np.ndarray, np.ndarray]
    heldout: tuple[np.ndarray, np.ndarray]
    background: np.ndarray
    ring_score: np.ndarray
    background_score: np.ndarray
    heldout_label_accuracy: float

    @property
    def score_ratio(self) -> float:
        return float(self.ring_score.mean() / self.background_score.mean())


def train_ring_model(settings: RingSettings, rng: Rng) -> tuple[JointModel, list[float], tuple]:
    X, y = sample_rings(settings.ring, rng.derive(_K_DATA, 0))
    spec = ModelSpec(input_dim=2, hidden=tuple(settings.hidden),
                     num_classes=len(settings.ring.centers), variant="dae",
                     decoder_mode=settings.decoder_mode, output_activation="linear")
    conf = ConfidenceParams(alpha=settings.alpha, beta=settings.beta, D=2)
    model = build_model(spec, rng.derive(_K_INIT, 0), conf, settings.sigma)
    epochs = -(-settings.steps * settings.batch_size // X.shape[0])
    _, losses = train_joint(model, X, y, epochs, settings.batch_size, rng.derive(_K_TRAIN, 0),
                            LossWeights(settings.lambda_rec, 0.0), eta=settings.eta,
                            max_steps=settings.steps)
    return model, losses, (X, y)


def ring_experiment(settings: RingSettings, rng: Rng) -> RingResult:
    model, losses, train = train_ring_model(settings, rng)
    held_spec = RingSpec(settings.ring.centers, settings.ring.inner_radius,
                         settings.ring.thickness, settings.heldout_per_ring)
    hx, hy = sample_rings(held_spec, rng.derive(_K_DATA, 1))
    bg = sample_background(settings.ring, rng.derive(_K_DATA, 2), settings.background_points,
                           settings.background_distance)
    ph, pb = predict(model, hx), predict(model, bg)
    acc = float(np.mean(ph.argmax == hy))
    return RingResult(model, losses, train, (hx, hy), bg, ph.confidence, pb.confidence, acc)


@dataclass(frozen=True)
class GridSpec:
    xmin: float = -2.5
    xmax: float = 2.5
    ymin: float = -2.5
    ymax: float = 2.5
    nx: int = 101
    ny: int = 101


@dataclass
class ConfidenceMap:
    xs: np.ndarray
    ys: np.ndarray
    distance: np.ndarray
    gate: np.ndarray
    score: np.ndarray
    label: np.ndarray
    scaled_max: np.ndarray

    def fields(self) -> dict[str, np.ndarray]:
        return {"distance": self.distance, "gate": self.gate, "score": self.score,
                "label": self.label.astype(np.float64), "scaled_max": self.scaled_max}


def confidence_map(model: JointModel, grid: GridSpec = GridSpec()) -> ConfidenceMap:
    """Score, its two factors and the predicted label over a regular 2D grid.

    Row ``i`` of each field corresponds to ``ys[i]``, column ``j`` to ``xs[j]``.
    """
    if model.spec.input_dim != 2 or model.dae is None:
        raise ParameterError("confidence maps need a 2-input dae model")
    xs = np.linspace(grid.xmin, grid.xmax, grid.nx)
    ys = np.linspace(grid.ymin, grid.ymax, grid.ny)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    rep = dae_ops.confidence_batch(model.dae, pts, model.conf)
    pred = predict(model, pts)
    shape = (grid.ny, grid.nx)
    dist = dae_ops.distance_factor(rep.recon_error, model.conf.alpha, model.conf.D)
    g = np.asarray(rep.gate) if model.conf.use_gate else np.ones(pts.shape[0])
    return ConfidenceMap(xs, ys, np.reshape(dist, shape), g.reshape(shape),
                         np.reshape(rep.score, shape), pred.argmax.reshape(shape),
                         pred.y_scaled.max(axis=1).reshape(shape))


# ---------------------------------------------------------------- fooling

@dataclass
class FoolingResult:
    variant: str
    accuracy: dict[float, float]
    report: FoolingReport
    model: JointModel


def fooling_experiment(variant: str, dataset: DigitDataset, settings: TrainSettings,
                       config: FoolingConfig, rng: Rng, thresholds=(0.0, 0.5, 0.9, 0.99),
                       workers: int = 1) -> FoolingResult:
    X, y = dataset.subset(range(10), settings.max_train, rng.derive(_K_DATA, 0))
    model = settings.fit(variant, X, y, rng.derive(_K_INIT, 0), rng.derive(_K_TRAIN, 0))
    pred = predict(model, dataset.test_x)
    acc = {t: thresholded_accuracy_from(pred, dataset.test_y, t) for t in thresholds}
    report = fooling_campaign(model, config, rng.derive(_K_ATTACK, 0), workers)
    return FoolingResult(variant, acc, report, model)


# --------------------------------------------------------------- open set

@dataclass
class OpenSetTask:
    num_known: int
    repetitions: int = 5
    threshold: float = 0.99
    known_classes: tuple[int, ...] | None = None
    total_classes: int = 10

    def __post_init__(self):
        if not 1 <= self.num_known <= self.total_classes:
            raise ParameterError("num_known must lie in [1, total_classes]")
        if self.known_classes is not None and len(self.known_classes) != self.num_known:
            raise ParameterError("known_classes must list num_known classes")

    @property
    def openness(self) -> float:
        return openness(self.num_known, self.total_classes)

    def known_for(self, rep: int, rng: Rng) -> tuple[int, ...]:
        if self.known_classes is not None:
            return tuple(sorted(self.known_classes))
        sub = rng.derive(_K_SUBSET, self.num_known, rep)
        return tuple(sorted(int(c) for c in sub.choice(self.total_classes, self.num_known)))


@dataclass
class OpenSetRow:
    variant: str
    num_known: int
    openness: float
    repetition: int
    known: tuple[int, ...]
    precision: float
    recall: float
    f: float


def _open_set_job(args) -> OpenSetRow:
    variant, dataset, task, rng, settings, rep = args
    known = task.known_for(rep, rng)
    X, y = dataset.subset(known, settings.max_train, rng.derive(_K_DATA, task.num_known, rep))
    model = settings.fit(variant, X, y, rng.derive(_K_INIT, task.num_known, rep),
                         rng.derive(_K_TRAIN, task.num_known, rep), task.total_classes)
    pred = predict(model, dataset.test_x)
    c = open_set_counts(pred.argmax, pred.confidence, dataset.test_y, known, task.threshold)
    return OpenSetRow(variant, task.num_known, task.openness, rep, known, c.precision,
                      c.recall, c.f)


def open_set_run(variant: str, dataset: DigitDataset, task: OpenSetTask, rng: Rng,
                 settings: TrainSettings | None = None, workers: int = 1) -> list[OpenSetRow]:
    """Train on a random subset of known classes per repetition and score the full test set.

    Output units for all ``total_classes`` exist in every model; the targets
    of unseen classes are simply never active.
    """
    if task.num_known < 1:
        raise ParameterError("the known-class set is empty")
    settings = settings or TrainSettings()
    jobs = [(variant, dataset, task, rng, settings, rep) for rep in range(task.repetitions)]
    return _map(_open_set_job, jobs, workers)


# ---------------------------------------------------------------- 1-class

@dataclass
class OneClassResult:
    variant: str
    target_class: int
    curve: RocCurve


def _one_class_job(args) -> OneClassResult:
    variant, dataset, target_class, rng, settings = args
    X, y = dataset.subset([target_class], settings.max_train,
                          rng.derive(_K_DATA, 100, target_class))
    model = settings.fit(variant, X, y, rng.derive(_K_INIT, 100, target_class),
                         rng.derive(_K_TRAIN, 100, target_class))
    pred = predict(model, dataset.test_x)
    return OneClassResult(variant, target_class,
                          roc_and_auc(pred.confidence, dataset.test_y == target_class))


def one_class_run(variant: str, dataset: DigitDataset, target_class: int, rng: Rng,
                  settings: TrainSettings | None = None) -> RocCurve:
    """Train on one class only (no negatives) and rank the full test set by confidence."""
    if not 0 <= target_class < 10:
        raise ParameterError("target_class must be a digit class in [0, 10)")
    return _one_class_job((variant, dataset, target_class, rng,
                           settings or TrainSettings())).curve


def one_class_campaign(variant: str, dataset: DigitDataset, rng: Rng,
                       settings: TrainSettings | None = None, classes=range(10),
                       workers: int = 1) -> tuple[list[OneClassResult], RocCurve]:
    settings = settings or TrainSettings()
    jobs = [(variant, dataset, int(k), rng, settings) for k in classes]
    results = _map(_one_class_job, jobs, workers)
    return results, average_roc([r.curve for r in results])
