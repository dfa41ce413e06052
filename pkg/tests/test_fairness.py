import numpy as np
import pytest

from fairsynth.data import Dataset
from fairsynth.fairness import accuracy, covariance_eo, covariance_sp, eod, evaluate, spd

from conftest import random_dataset
from oracles import fairness_brute_force


def _two_points(y=(1, 1)):
    # a = (x, s) with theta = (1, 0): scores equal x
    return Dataset([[0.3], [1.7]], [0, 1], list(y)), np.array([1.0, 0.0])


class TestCovariances:
    def test_identical_groups(self):
        ds = Dataset([[1.0], [2.0]], [1, 1], [1, -1])
        assert covariance_sp(ds, np.array([1.0, 2.0])) == 0.0
        assert covariance_eo(ds, np.array([1.0, 2.0])) == 0.0

    def test_zero_theta(self, small_ds):
        assert covariance_sp(small_ds, np.zeros(3)) == 0.0

    def test_two_points_sp(self):
        ds, theta = _two_points()
        assert covariance_sp(ds, theta) == pytest.approx((1.7 - 0.3) / 4)

    def test_two_points_eo(self):
        ds, theta = _two_points()
        assert covariance_eo(ds, theta) == pytest.approx((1.7 - 0.3) / 4)

    def test_eo_ignores_negatives(self):
        ds = Dataset([[1.0], [2.0]], [0, 1], [-1, -1])
        assert covariance_eo(ds, np.array([1.0, 1.0])) == 0.0

    def test_eo_keeps_global_mean(self):
        # s-bar and 1/N are over all points, not just y = +1
        ds = Dataset([[1.0], [2.0], [5.0]], [0, 1, 1], [1, 1, -1])
        theta = np.array([1.0, 0.0])
        sbar = 2 / 3
        expected = ((0 - sbar) * 1.0 + (1 - sbar) * 2.0) / 3
        assert covariance_eo(ds, theta) == pytest.approx(expected)


def _predicting(s, y, yhat):
    """Dataset plus theta whose predictions are exactly ``yhat``."""
    ds = Dataset(np.asarray(yhat, float).reshape(-1, 1), s, y)
    return ds, np.array([1.0, 0.0])


class TestRates:
    def test_all_positive_predictor(self, small_ds):
        assert spd(small_ds, np.zeros(3)) == 0.0
        assert eod(small_ds, np.zeros(3)) == 0.0

    def test_extremes(self):
        assert spd(*_predicting([1, 1, 0, 0], [1] * 4, [1, 1, -1, -1])) == 1.0

    def test_four_points(self):
        assert spd(*_predicting([1, 1, 0, 0], [1] * 4, [1, -1, -1, -1])) == 0.5

    def test_eod_perfect_classifier(self, small_ds):
        y = small_ds.y
        assert eod(*_predicting(small_ds.s, y, y)) == 0.0

    def test_eod_counts(self):
        assert eod(*_predicting([1, 1, 0, 0], [1] * 4, [1, 1, 1, -1])) == 0.5

    def test_eod_undefined_without_positives(self):
        ds, theta = _predicting([1, 1, 0, 0], [1, 1, -1, -1], [1] * 4)
        assert np.isnan(eod(ds, theta))
        assert not evaluate(ds, theta).eod_defined

    def test_spd_undefined_with_one_group(self):
        assert np.isnan(spd(*_predicting([1, 1], [1, -1], [1, -1])))

    def test_matches_brute_force(self, rng):
        for _ in range(30):
            n = int(rng.integers(4, 40))
            s = rng.integers(0, 2, n)
            y = rng.choice([-1, 1], n)
            yhat = rng.choice([-1, 1], n)
            ds, theta = _predicting(s, y, yhat)
            np.testing.assert_allclose([spd(ds, theta), eod(ds, theta)],
                                       fairness_brute_force(s, y, yhat), equal_nan=True)


class TestAccuracyAndReport:
    def test_exact_separator(self):
        ds = Dataset([[-2.0], [-1.0], [1.0], [2.0]], [0, 1, 0, 1], [-1, -1, 1, 1])
        assert accuracy(ds, np.array([1.0, 0.0])) == 1.0

    def test_zero_theta_predicts_positive(self, small_ds):
        assert accuracy(small_ds, np.zeros(3)) == np.mean(small_ds.y == 1)

    def test_report(self, rng):
        ds = random_dataset(rng, 50, 3)
        theta = rng.standard_normal(3)
        rep = evaluate(ds, theta)
        assert 0 <= rep.accuracy <= 1 and -1 <= rep.spd <= 1
        assert rep.spd_defined and rep.eod_defined
        assert rep.group_counts["s0"] + rep.group_counts["s1"] == 50
        assert rep.covariance_sp == covariance_sp(ds, theta)
