"""Synthetic ring data and MNIST-format digit datasets."""

from __future__ import annotations

import gzip
import importlib.util
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .io.idx import encode_idx, load_idx, parse_idx
from .tensor import Rng

MNIST_ENV = "DAECONF_MNIST_DIR"
RING_CENTERS = ((-1.0, 1.0), (1.0, 1.0), (1.0, -1.0))


@dataclass(frozen=True)
class RingSpec:
    centers: tuple[tuple[float, float], ...] = RING_CENTERS
    inner_radius: float = 0.6
    thickness: float = 0.1
    samples_per_ring: int = 1000

    def __post_init__(self):
        if self.inner_radius <= 0 or self.thickness <= 0:
            raise ParameterError("inner_radius and thickness must be positive")
        if self.samples_per_ring < 1:
            raise ParameterError("samples_per_ring must be positive")

    @property
    def outer_radius(self) -> float:
        return self.inner_radius + self.thickness


def sample_rings(spec: RingSpec, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Points uniform in area on each annulus, labelled by ring index."""
    xs, ys = [], []
    r0, r1 = spec.inner_radius, spec.outer_radius
    for label, (cx, cy) in enumerate(spec.centers):
        n = spec.samples_per_ring
        # inverse CDF of the radius under an area-uniform density
        r = np.sqrt(rng.uniform(n, r0 * r0, r1 * r1))
        theta = rng.uniform(n, 0.0, 2 * np.pi)
        xs.append(np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)]))
        ys.append(np.full(n, label, dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def distance_to_rings(points: np.ndarray, spec: RingSpec) -> np.ndarray:
    """Euclidean distance from each point to the nearest annulus (0 inside one)."""
    best = np.full(points.shape[0], np.inf)
    for cx, cy in spec.centers:
        rad = np.hypot(points[:, 0] - cx, points[:, 1] - cy)
        d = np.maximum(np.maximum(spec.inner_radius - rad, rad - spec.outer_radius), 0.0)
        best = np.minimum(best, d)
    return best


def sample_background(spec: RingSpec, rng: Rng, n: int, min_distance: float = 0.5,
                      box: tuple[float, float] = (-2.5, 2.5)) -> np.ndarray:
    """Uniform points in a square box at least ``min_distance`` from every ring."""
    out = []
    have = 0
    while have < n:
        cand = rng.uniform((4 * n, 2), box[0], box[1])
        keep = cand[distance_to_rings(cand, spec) >= min_distance]
        out.append(keep)
        have += keep.shape[0]
    return np.concatenate(out)[:n]


@dataclass
class DigitDataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    name: str = "mnist"

    def subset(self, classes, max_train: int | None, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
        """Training samples of ``classes``, randomly capped at ``max_train``."""
        mask = np.isin(self.train_y, np.asarray(list(classes)))
        idx = np.flatnonzero(mask)
        if max_train is not None and idx.size > max_train:
            idx = np.sort(rng.choice(idx, max_train, replace=False))
        return self.train_x[idx], self.train_y[idx]


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"),
                 stem.replace("-idx", ".idx") + ".gz"):
        p = directory / name
        if p.exists():
            return p
    raise FileNotFoundError(f"no {stem}[.gz] under {directory}")


def load_mnist_dir(directory, name: str = "mnist") -> DigitDataset:
    """Load the four standard IDX files (images and labels, train and test)."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {d}")
    tx = load_idx(_find(d, "train-images-idx3-ubyte"))
    ty = load_idx(_find(d, "train-labels-idx1-ubyte"))
    vx = load_idx(_find(d, "t10k-images-idx3-ubyte"))
    vy = load_idx(_find(d, "t10k-labels-idx1-ubyte"))
    if tx.shape[0] != ty.shape[0] or vx.shape[0] != vy.shape[0]:
        raise FormatError("image and label counts differ")
    return DigitDataset(tx.reshape(tx.shape[0], -1), ty, vx.reshape(vx.shape[0], -1), vy, name)


def bundled_sample_path() -> Path:
    """Location of the 5000-digit MNIST sample shipped inside ``mlxtend``."""
    spec = importlib.util.find_spec("mlxtend")
    if spec is None or not spec.submodule_search_locations:
        raise FileNotFoundError("mlxtend is not installed; set "
                                f"{MNIST_ENV} to a directory of MNIST IDX files instead")
    return Path(list(spec.submodule_search_locations)[0]) / "data" / "data" / "mnist_5k.csv.gz"


def sample_as_idx(test_per_class: int = 100) -> dict[str, bytes]:
    """Convert the bundled sample to the four IDX buffers.

    Within each class the first samples in file order go to training and
    the last ``test_per_class`` to test.
    """
    with gzip.open(bundled_sample_path(), "rt") as fh:
        table = np.loadtxt(fh, delimiter=",")
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.int64)
    train, test = [], []
    for k in range(10):
        idx = np.flatnonzero(labels == k)
        train.append(idx[:-test_per_class])
        test.append(idx[-test_per_class:])
    tr, te = np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
    return {
        "train-images-idx3-ubyte": encode_idx(pixels[tr].reshape(-1, 28, 28)),
        "train-labels-idx1-ubyte": encode_idx(labels[tr].astype(np.uint8)),
        "t10k-images-idx3-ubyte": encode_idx(pixels[te].reshape(-1, 28, 28)),
        "t10k-labels-idx1-ubyte": encode_idx(labels[te].astype(np.uint8)),
    }


def load_digits(path=None) -> DigitDataset:
    """MNIST-format digits from ``path``, ``$DAECONF_MNIST_DIR``, or the bundled sample."""
    path = path or os.environ.get(MNIST_ENV)
    if path:
        return load_mnist_dir(path)
    bufs = sample_as_idx()
    tx = parse_idx(bufs["train-images-idx3-ubyte"])
    vx = parse_idx(bufs["t10k-images-idx3-ubyte"])
    return DigitDataset(tx.reshape(tx.shape[0], -1), parse_idx(bufs["train-labels-idx1-ubyte"]),
                        vx.reshape(vx.shape[0], -1), parse_idx(bufs["t10k-labels-idx1-ubyte"]),
                        "mnist-sample")
