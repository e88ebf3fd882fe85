import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from daeconf.classifier import ModelSpec, build_model, predict
from daeconf.dae import ConfidenceParams
from daeconf.errors import ParameterError
from daeconf.fooling import (Fgn, FoolingConfig, fooling_attempt, fooling_campaign,
                             reported_score, signal_loss_grad)
from daeconf.gradcheck import numeric_grad, rel_error
from daeconf.tensor import Rng


def model(variant, seed=0, conf=None, jitter=0.3):
    spec = ModelSpec(input_dim=8, hidden=(6,), num_classes=3, variant=variant, omega=2)
    m = build_model(spec, Rng(seed), conf)
    r = Rng(seed + 100)
    for p in m.params():
        p += r.normal(p.shape, 0.0, jitter)
    return m


def sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def test_fgn_tracks_explicit_sgd(rng):
    fgn = Fgn(5, rng)
    W, b = fgn.W0.copy(), np.zeros(5)
    assert np.all(np.abs(W) <= 0.01)
    for _ in range(4):
        img, cache = fgn.forward()
        np.testing.assert_allclose(img, sigmoid(fgn.z[0] @ W + b), rtol=1e-12)
        g_img = rng.normal(5)
        fgn.sgd_step(cache, g_img, 0.1)
        g_pre = g_img * img * (1 - img)
        W = W - 0.1 * np.outer(fgn.z[0], g_pre)
        b = b - 0.1 * g_pre
    W_f, b_f = fgn.weights()
    np.testing.assert_allclose(W_f, W, atol=1e-14)
    np.testing.assert_allclose(b_f, b, atol=1e-14)
    np.testing.assert_allclose(fgn.forward()[0], sigmoid(fgn.z[0] @ W + b), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 50.0))
def test_fgn_output_in_open_unit_interval(seed, scale):
    r = Rng(seed)
    fgn = Fgn(16, r)
    img, cache = fgn.forward()
    fgn.sgd_step(cache, r.normal(16, 0.0, scale), 1.0)
    img = fgn.forward()[0]
    assert np.all((img >= 0.0) & (img <= 1.0))
    # strictly inside wherever float64 can represent the sigmoid without rounding to 1
    moderate = np.abs(fgn._pre) < 30.0
    assert np.all((img[moderate] > 0.0) & (img[moderate] < 1.0))


@pytest.mark.parametrize("variant", ["plain", "cool", "dae"])
def test_reported_score_matches_predict(variant, rng):
    m = model(variant)
    for _ in range(5):
        x = rng.uniform(8)
        pred = predict(m, x)
        for k in range(3):
            want = pred.y_scaled[0, k]
            assert reported_score(m, x, k, threshold=0.0) == pytest.approx(want, rel=1e-12)


def test_dae_reported_score_skips_gate_below_threshold(rng):
    m = model("dae")
    x = rng.uniform(8)
    pred = predict(m, x)
    k = int(pred.argmax[0])
    ungated = reported_score(m, x, k, threshold=1.0)
    assert ungated >= pred.y_scaled[0, k]


@pytest.mark.parametrize("variant", ["plain", "cool", "dae"])
@pytest.mark.parametrize("target", ["unscaled_y", "scaled_y"])
def test_signal_gradient(variant, target, rng):
    conf = ConfidenceParams(alpha=5.0, beta=10.0, D=8, use_gate=False)
    m = model(variant, conf=conf if variant == "dae" else None)
    for j in range(5):
        x = rng.uniform(8, 0.1, 0.9)
        loss, g = signal_loss_grad(m, x, j % 3, target)
        num = numeric_grad(lambda: signal_loss_grad(m, x, j % 3, target)[0], x)
        assert rel_error(g, num) < 1e-6
        if target == "scaled_y" and variant != "cool":
            assert loss == pytest.approx(-np.log(predict(m, x).y_scaled[0, j % 3]), rel=1e-10)


def test_constant_model_fooled_at_first_step(rng):
    m = model("plain", jitter=0.0)
    m.head[0].W[...] = 0.0
    m.head[0].b[...] = [30.0, 0.0, 0.0]
    rep = fooling_campaign(m, FoolingConfig(3, 50, 0.9, 1e-3), rng, classes=[0])
    assert rep.rate == 1.0 and rep.mean_steps == 1.0
    assert rep.successes.tolist() == [3]
    res = fooling_attempt(m, 1, FoolingConfig(1, 7, 0.9, 1e-3), rng)
    assert not res.success and res.steps == 7 and res.sample.shape == (8,)


def test_capped_dae_never_fooled(rng):
    conf = ConfidenceParams(alpha=1e6, beta=10.0, D=8)
    m = model("dae", conf=conf)
    before = [p.copy() for p in m.params()]
    rep = fooling_campaign(m, FoolingConfig(2, 30, 0.9, 1e-1, "scaled_y"), rng)
    assert rep.rate == 0.0 and rep.mean_steps is None
    assert rep.successes.tolist() == [0, 0, 0]
    assert rep.samples.shape == (6, 8)
    for a, b in zip(before, m.params()):
        np.testing.assert_array_equal(a, b)


def test_plain_model_is_fooled(rng):
    m = model("plain", jitter=1.0)
    rep = fooling_campaign(m, FoolingConfig(2, 3000, 0.9, 0.5), rng)
    assert rep.rate == 1.0
    assert np.all(rep.steps[rep.succeeded] >= 1)


def test_campaign_independent_of_workers(rng):
    m = model("dae")
    cfg = FoolingConfig(2, 40, 0.5, 0.5)
    a = fooling_campaign(m, cfg, Rng(5), workers=1)
    b = fooling_campaign(m, cfg, Rng(5), workers=2)
    np.testing.assert_array_equal(a.steps, b.steps)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.successes, b.successes)


@pytest.mark.parametrize("kw", [dict(trials_per_class=0), dict(max_updates=0), dict(eta=0.0),
                                dict(threshold=1.0), dict(target="logits")])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        FoolingConfig(**kw)
