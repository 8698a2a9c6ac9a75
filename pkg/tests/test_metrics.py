import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsfgan.metrics import confidence_interval, precision_recall, rmse_r2

from oracles import t_interval

# two-sided 95% critical value for 4 degrees of freedom, from printed t tables
T_975_DF4 = 2.776445105


def test_precision_recall_confusion_matrix():
    # TP=2, FP=1, FN=1, TN=1
    p, r = precision_recall([1, 1, 1, 0, 0], [1, 1, 0, 1, 0])
    assert abs(p - 2 / 3) < 1e-9 and abs(r - 2 / 3) < 1e-9


def test_precision_recall_perfect():
    assert precision_recall([0, 1, 1, 0], [0, 1, 1, 0]) == (1.0, 1.0)


def test_precision_recall_no_positive_predictions():
    assert precision_recall([1, 0, 1], [0, 0, 0]) == (0.0, 0.0)


def test_precision_recall_length_mismatch():
    with pytest.raises(ValueError):
        precision_recall([1, 0], [1])


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=50))
def test_precision_recall_in_unit_interval(pairs):
    y, yhat = zip(*pairs)
    p, r = precision_recall(list(y), list(yhat))
    assert 0 <= p <= 1 and 0 <= r <= 1


def test_rmse_r2_closed_form():
    rmse, r2 = rmse_r2([0, 0, 1, 1], [0.1, 0.1, 0.9, 0.9])
    assert abs(rmse - 0.1) < 1e-9
    assert abs(r2 - 0.96) < 1e-9


def test_rmse_r2_perfect():
    assert rmse_r2([1.0, 2.0, 5.0], [1.0, 2.0, 5.0]) == (0.0, 1.0)


def test_r2_of_mean_prediction_is_zero():
    y = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
    assert abs(rmse_r2(y, np.full(5, y.mean()))[1]) < 1e-12


def test_r2_undefined_for_constant_target():
    rmse, r2 = rmse_r2([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert r2 is None
    assert rmse == pytest.approx(math.sqrt(2 / 3))


def test_rmse_r2_needs_two_values():
    with pytest.raises(ValueError):
        rmse_r2([1.0], [1.0])


def test_interval_identical_values():
    assert confidence_interval([0.4, 0.4, 0.4]) == (pytest.approx(0.4), 0.0)


def test_interval_two_values_mean():
    assert confidence_interval([0.0, 1.0])[0] == 0.5


def test_interval_matches_tabulated_t():
    values = np.random.default_rng(11).uniform(0, 1, 5).tolist()
    mean, half = confidence_interval(values)
    ref_mean, ref_half = t_interval(values, T_975_DF4)
    assert abs(mean - ref_mean) < 1e-10
    assert abs(half - ref_half) < 1e-10


def test_interval_needs_two_values():
    with pytest.raises(ValueError):
        confidence_interval([1.0])
