import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from daeconf.errors import ParameterError
from daeconf.metrics import (RocCurve, average_roc, f_measure, open_set_counts, openness,
                             roc_and_auc)
from daeconf.tensor import Rng


def pair_count_auc(scores, pos):
    """P(s+ > s-) + P(s+ == s-)/2 by enumerating every positive/negative pair."""
    s_pos = [s for s, p in zip(scores, pos) if p]
    s_neg = [s for s, p in zip(scores, pos) if not p]
    total = 0.0
    for a in s_pos:
        for b in s_neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(s_pos) * len(s_neg))


def test_openness_values():
    assert openness(10, 10) == 0.0
    assert abs(openness(1, 10) - (1 - math.sqrt(0.1))) < 1e-12
    assert openness(2, 10) > 0.5 > openness(3, 10)
    with pytest.raises(ParameterError):
        openness(0, 10)
    with pytest.raises(ParameterError):
        openness(11, 10)


@given(st.floats(0.0, 1.0))
def test_f_of_equal_precision_and_recall(p):
    assert f_measure(p, p) == p


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_f_bounds(p, r):
    f = f_measure(p, r)
    assert min(p, r) - 1e-15 <= f <= 2 * min(p, r) + 1e-15
    assert f <= max(p, r) + 1e-15


def test_open_set_counts_by_hand():
    # known classes {0, 1}; unknown samples carry label 5
    pred = [0, 1, 1, 0, 2, 0]
    conf = [0.999, 0.999, 0.5, 0.999, 0.999, 0.999]
    true = [0, 0, 1, 5, 5, 1]
    c = open_set_counts(pred, conf, true, [0, 1], 0.99)
    # accepted: idx 0 (tp), 1 (wrong label), 3 (unknown), 5 (wrong label); idx 4 predicts an unknown class
    assert (c.true_positive, c.false_positive, c.accepted, c.known_total) == (1, 3, 4, 4)
    assert c.precision == 0.25 and c.recall == 0.25 and c.f == 0.25


def test_open_set_nothing_accepted():
    c = open_set_counts([0, 1], [0.1, 0.2], [0, 1], [0, 1], 0.99)
    assert c.precision == 0.0 and c.recall == 0.0 and c.f == 0.0


def test_open_set_closed_world_perfect():
    c = open_set_counts([0, 1, 2], [1.0, 1.0, 1.0], [0, 1, 2], range(3), 0.5)
    assert c.precision == c.recall == c.f == 1.0


@pytest.mark.parametrize("n", [2, 3, 10, 57, 200])
def test_auc_equals_pair_counting(n):
    r = Rng(n)
    for trial in range(20):
        pos = r.uniform(n) < 0.4
        pos[0], pos[-1] = True, False
        # coarse scores produce plenty of ties
        scores = np.round(r.uniform(n), 1 if trial % 2 else 6)
        curve = roc_and_auc(scores, pos)
        assert curve.auc == pytest.approx(pair_count_auc(scores, pos), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=60))
def test_auc_property(pairs):
    scores = [float(s) for s, _ in pairs]
    pos = [p for _, p in pairs]
    if all(pos) or not any(pos):
        with pytest.raises(ParameterError):
            roc_and_auc(scores, pos)
        return
    curve = roc_and_auc(scores, pos)
    assert curve.auc == pytest.approx(pair_count_auc(scores, pos), abs=1e-12)
    assert curve.fpr[0] == curve.tpr[0] == 0.0
    assert curve.fpr[-1] == curve.tpr[-1] == 1.0
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)


def test_auc_extremes():
    assert roc_and_auc([3, 2, 1, 0], [1, 1, 0, 0]).auc == 1.0
    assert roc_and_auc([0, 1, 2, 3], [1, 1, 0, 0]).auc == 0.0
    assert roc_and_auc([1, 1, 1, 1], [1, 0, 1, 0]).auc == 0.5


def test_roc_input_validation():
    with pytest.raises(ParameterError):
        roc_and_auc([1.0, 2.0], [True])


def test_average_roc_of_identical_curves():
    r = Rng(4)
    pos = r.uniform(80) < 0.5
    curve = roc_and_auc(r.uniform(80) + pos * 0.3, pos)
    avg = average_roc([curve, curve, curve])
    again = average_roc([avg, avg])
    np.testing.assert_allclose(again.tpr, avg.tpr, atol=1e-12)
    assert avg.auc == pytest.approx(curve.auc, abs=0.02)
    assert avg.fpr[0] == 0.0 and avg.fpr[-1] == 1.0 and avg.tpr[-1] == 1.0


def test_average_roc_by_hand():
    a = RocCurve(np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 1.0]), np.zeros(3))
    b = RocCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.zeros(2))
    avg = average_roc([a, b], grid_points=3)
    np.testing.assert_allclose(avg.tpr, [0.5, 0.75, 1.0])
