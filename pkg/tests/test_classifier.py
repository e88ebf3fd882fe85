import math

import numpy as np
import pytest

from daeconf.classifier import (LossWeights, ModelSpec, Prediction, build_model, joint_loss,
                                predict, thresholded_accuracy, thresholded_accuracy_from,
                                train_joint)
from daeconf.errors import DimensionError, ParameterError
from daeconf.gradcheck import JOINT_TARGETS, check_joint
from daeconf.tensor import Rng


def small_model(variant, seed=0, **kw):
    spec = ModelSpec(input_dim=6, hidden=(5,), num_classes=3, variant=variant, omega=3, **kw)
    return build_model(spec, Rng(seed))


def blobs(rng, n=90):
    centers = np.array([[0.2] * 6, [0.8] * 6, [0.2, 0.8] * 3])
    y = np.arange(n) % 3
    return centers[y] + rng.normal((n, 6), 0.0, 0.05), y


@pytest.mark.parametrize("name", sorted(JOINT_TARGETS))
def test_joint_loss_gradient(name):
    for j in range(10):
        assert check_joint(Rng(9).derive(j), **JOINT_TARGETS[name]) < 1e-4


def test_plain_confidence_is_max_posterior():
    model = small_model("plain")
    head = model.head[0]
    head.W[...] = 0.0
    head.b[...] = np.log([0.7, 0.2, 0.1])
    pred = predict(model, np.zeros((2, 6)))
    np.testing.assert_allclose(pred.y, [[0.7, 0.2, 0.1]] * 2, rtol=1e-12)
    np.testing.assert_allclose(pred.confidence, [0.7, 0.7], rtol=1e-12)
    np.testing.assert_array_equal(pred.y_scaled, pred.y)


def test_argmax_ties_pick_lowest_index():
    model = small_model("plain")
    model.head[0].W[...] = 0.0
    model.head[0].b[...] = [0.0, 1.0, 1.0]
    assert predict(model, np.zeros(6)).argmax[0] == 1


def test_dae_outputs_are_scaled_posteriors(rng):
    model = small_model("dae")
    for p in model.params():
        p += rng.normal(p.shape, 0.0, 0.3)
    X = rng.uniform((10, 6))
    pred = predict(model, X)
    np.testing.assert_allclose(pred.y.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(pred.y_scaled, pred.confidence[:, None] * pred.y)
    np.testing.assert_array_equal(np.argmax(pred.y_scaled, axis=1), np.argmax(pred.y, axis=1))
    assert np.all((pred.confidence > 0) & (pred.confidence <= 1))


def test_scaling_by_hand():
    y = np.array([[0.8, 0.2]])
    conf = np.array([0.5])
    pred = Prediction(y, conf[:, None] * y, conf, np.array([0]))
    np.testing.assert_allclose(pred.y_scaled, [[0.4, 0.1]])


def test_cool_confidence_of_argmax_class(rng):
    model = small_model("cool")
    for p in model.params():
        p += rng.normal(p.shape, 0.0, 0.5)
    pred = predict(model, rng.uniform((8, 6)))
    np.testing.assert_allclose(pred.y.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(pred.confidence,
                                  pred.y_scaled[np.arange(8), pred.argmax])


def test_thresholded_accuracy_counting():
    y = np.full((4, 2), 0.5)
    pred = Prediction(y, y, np.array([0.95, 0.97, 0.99, 0.5]), np.array([1, 0, 1, 1]))
    labels = np.array([1, 0, 1, 1])
    assert thresholded_accuracy_from(pred, labels, 0.9) == 0.75
    assert thresholded_accuracy_from(pred, labels, 0.0) == 1.0
    assert thresholded_accuracy_from(pred, labels, 1.0) == 0.0


def test_thresholded_accuracy_monotone(rng):
    model = small_model("dae")
    X, y = blobs(rng)
    train_joint(model, X, y, 5, 16, rng)
    accs = [thresholded_accuracy(model, X, y, t) for t in (0.0, 0.5, 0.9, 0.99)]
    assert all(a >= b for a, b in zip(accs, accs[1:]))
    assert accs[0] == float(np.mean(predict(model, X).argmax == y))


def test_zero_reconstruction_weight_matches_plain(rng):
    X, y = blobs(rng)
    plain, dae = small_model("plain", seed=3), small_model("dae", seed=3)
    _, lp = train_joint(plain, X, y, 3, 16, Rng(8), LossWeights(rec=0.0))
    _, ld = train_joint(dae, X, y, 3, 16, Rng(8), LossWeights(rec=0.0))
    assert lp == ld


def test_training_is_deterministic(rng):
    X, y = blobs(rng)
    runs = []
    for _ in range(2):
        m = small_model("dae", seed=5)
        train_joint(m, X, y, 3, 16, Rng(2), LossWeights(rec=1.0, l2=1e-3))
        runs.append(m.params())
    for a, b in zip(*runs):
        np.testing.assert_array_equal(a, b)


def test_joint_training_learns_blobs(rng):
    X, y = blobs(rng, 300)
    for variant in ("plain", "cool", "dae"):
        m = small_model(variant, seed=1)
        _, losses = train_joint(m, X, y, 60, 32, rng.derive(1), eta=1e-2)
        assert np.mean(predict(m, X).argmax == y) == 1.0
        assert losses[-1] < losses[0]


def test_loss_parts_reported(rng):
    X, y = blobs(rng, 9)
    m = small_model("dae")
    total, parts, _ = joint_loss(m, X, y, X + 0.1, LossWeights(rec=2.0, l2=0.5))
    assert set(parts) == {"ce", "rec", "l2"}
    assert total == pytest.approx(parts["ce"] + 2.0 * parts["rec"] + parts["l2"])
    _, parts, _ = joint_loss(m, X, y, None, LossWeights())
    assert set(parts) == {"ce"}


def test_input_validation(rng):
    m = small_model("plain")
    with pytest.raises(DimensionError):
        predict(m, np.zeros((2, 5)))
    with pytest.raises(ParameterError):
        train_joint(m, np.zeros((2, 6)), np.array([0, 3]), 1, 2, rng)
    with pytest.raises(DimensionError):
        train_joint(m, np.zeros((2, 6)), np.array([0]), 1, 2, rng)
    with pytest.raises(ParameterError):
        ModelSpec(variant="svm")
    with pytest.raises(ParameterError):
        build_model(ModelSpec(architecture="cnn", decoder_mode="symmetric"), rng)


def test_variants_share_initial_weights():
    models = [small_model(v, seed=4) for v in ("plain", "dae")]
    for a, b in zip(models[0].encoder.params(), models[1].encoder.params()):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(models[0].head[0].W, models[1].head[0].W)


def test_cnn_model_shapes(rng):
    spec = ModelSpec(variant="dae", architecture="cnn", decoder_mode="asymmetric",
                     hidden=(16,), conv_channels=(2, 3))
    model = build_model(spec, rng)
    X = rng.uniform((3, 784))
    pred = predict(model, X)
    assert pred.y.shape == (3, 10) and pred.confidence.shape == (3,)
    _, losses = train_joint(model, X, np.array([0, 1, 2]), 1, 3, rng)
    assert math.isfinite(losses[0])


@pytest.mark.slow
def test_desk_scale_training_accuracy(digits):
    from daeconf.protocols import TrainSettings
    X, y = digits.subset(range(10), 2000, Rng(0))
    model = TrainSettings().fit("dae", X, y, Rng(1), Rng(2))
    assert np.mean(predict(model, X).argmax == y) >= 0.97
