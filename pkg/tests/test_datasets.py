import numpy as np
import pytest

from daeconf.datasets import (RingSpec, distance_to_rings, load_digits, load_mnist_dir,
                              sample_as_idx, sample_background, sample_rings)
from daeconf.errors import ParameterError
from daeconf.tensor import Rng


def test_rings_inside_annuli_and_labelled(rng):
    spec = RingSpec(samples_per_ring=2000)
    X, y = sample_rings(spec, rng)
    assert X.shape == (6000, 2) and np.bincount(y).tolist() == [2000] * 3
    for k, (cx, cy) in enumerate(spec.centers):
        r = np.hypot(X[y == k, 0] - cx, X[y == k, 1] - cy)
        assert r.min() >= 0.6 - 1e-12 and r.max() <= 0.7 + 1e-12
    assert np.all(distance_to_rings(X, spec) == 0.0)


def test_rings_uniform_in_area(rng):
    # under an area-uniform density r^2 is uniform on [r0^2, r1^2]
    spec = RingSpec(samples_per_ring=20000)
    X, y = sample_rings(spec, rng)
    cx, cy = spec.centers[0]
    r2 = np.sort((X[y == 0, 0] - cx) ** 2 + (X[y == 0, 1] - cy) ** 2)
    u = (r2 - 0.36) / (0.49 - 0.36)
    ecdf = np.arange(1, u.size + 1) / u.size
    assert np.max(np.abs(ecdf - u)) < 0.015   # Kolmogorov-Smirnov, ~1.5% critical value at n=20000


def test_background_distance(rng):
    spec = RingSpec()
    bg = sample_background(spec, rng, 500)
    assert bg.shape == (500, 2)
    assert np.all(distance_to_rings(bg, spec) >= 0.5)
    assert np.all(np.abs(bg) <= 2.5)


def test_distance_by_hand():
    spec = RingSpec()
    pts = np.array([[-1.0, 1.0], [0.0, 0.0], [-1.0, 1.65]])
    np.testing.assert_allclose(distance_to_rings(pts, spec),
                               [0.6, np.sqrt(2) - 0.7, 0.0], atol=1e-12)


def test_ring_spec_validation():
    with pytest.raises(ParameterError):
        RingSpec(inner_radius=0.0)
    with pytest.raises(ParameterError):
        RingSpec(samples_per_ring=0)


def test_bundled_digits(digits):
    assert digits.train_x.shape == (4000, 784) and digits.test_x.shape == (1000, 784)
    assert np.bincount(digits.train_y).tolist() == [400] * 10
    assert np.bincount(digits.test_y).tolist() == [100] * 10
    assert digits.train_x.min() >= 0.0 and digits.train_x.max() <= 1.0


def test_subset(digits):
    X, y = digits.subset([3, 7], 500, Rng(1))
    assert X.shape == (500, 784) and set(y.tolist()) == {3, 7}
    X2, y2 = digits.subset([3, 7], 500, Rng(1))
    np.testing.assert_array_equal(X, X2)
    X3, _ = digits.subset([3], None, Rng(1))
    assert X3.shape[0] == 400


def test_mnist_dir_round_trip(tmp_path, digits):
    for name, data in sample_as_idx().items():
        (tmp_path / name).write_bytes(data)
    ds = load_mnist_dir(tmp_path)
    np.testing.assert_array_equal(ds.train_x, digits.train_x)
    np.testing.assert_array_equal(ds.test_y, digits.test_y)
    ds2 = load_digits(tmp_path)
    np.testing.assert_array_equal(ds2.train_y, digits.train_y)


def test_missing_dir(tmp_path):
    with pytest.raises(FileNotFoundError, match="not found"):
        load_mnist_dir(tmp_path / "nope")
    with pytest.raises(FileNotFoundError, match="train-images"):
        load_mnist_dir(tmp_path)
