import numpy as np
import pytest

from fairsynth.data import Dataset
from fairsynth.model import (RegularizedLoss, logistic_loss, predict, regularized_loss, sigmoid,
                             softplus)

from conftest import random_dataset


def _central_diff(f, x, h):
    out = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        out.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(out)


class TestPredict:
    @pytest.mark.parametrize("theta, expected", [((1, 0), 1), ((-1, 0), -1), ((0, 0), 1)])
    def test_sign(self, theta, expected):
        assert predict(np.array(theta, float), np.array([2.0, 5.0])) == expected

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(np.zeros(3), np.zeros(2))


class TestScalarFunctions:
    def test_softplus_extremes(self):
        z = np.array([-800.0, -40.0, 0.0, 40.0, 800.0])
        np.testing.assert_allclose(softplus(z), [0.0, np.exp(-40.0), np.log(2), 40.0, 800.0], rtol=1e-15)

    def test_sigmoid_symmetry(self):
        z = np.linspace(-50, 50, 101)
        np.testing.assert_allclose(sigmoid(z) + sigmoid(-z), 1.0, rtol=1e-15)


class TestLogisticLoss:
    def test_zero_theta(self, small_ds):
        assert logistic_loss(small_ds, np.zeros(3)) == pytest.approx(np.log(2), rel=1e-15)

    def test_confident_point(self):
        ds = Dataset([[1.0]], [1], [1])
        assert logistic_loss(ds, np.array([10.0, 10.0])) == pytest.approx(np.log1p(np.exp(-20.0)), rel=1e-12)
        assert logistic_loss(ds, np.array([10.0, 10.0])) == pytest.approx(2.061e-9, rel=1e-3)

    def test_wrong_side_point(self):
        ds = Dataset([[1.0]], [0], [-1])
        assert logistic_loss(ds, np.array([1.0, 0.0])) == pytest.approx(1.313262, abs=1e-6)


class TestRegularizedLoss:
    def test_zero_theta_value(self):
        ds = Dataset([[1.0], [2.0]], [0, 1], [1, -1])
        assert regularized_loss(ds, np.zeros(2), 1e-4) == pytest.approx(np.log(2))

    def test_gradient_matches_fd(self, rng):
        ds = random_dataset(rng, 30, 4)
        f = RegularizedLoss(ds, 0.3)
        for _ in range(5):
            theta = rng.standard_normal(4)
            fd = _central_diff(f.value, theta, 1e-6)
            np.testing.assert_allclose(f.gradient(theta), fd, rtol=1e-6, atol=1e-9)

    def test_hessian_matches_fd_and_is_bounded_below(self, rng):
        ds = random_dataset(rng, 30, 4)
        lam = 1e-2
        f = RegularizedLoss(ds, lam)
        theta = rng.standard_normal(4)
        fd = np.column_stack([_central_diff(lambda t: f.gradient(t)[i], theta, 1e-5) for i in range(4)])
        H = f.hessian(theta)
        np.testing.assert_allclose(H, fd, rtol=1e-5, atol=1e-9)
        np.testing.assert_allclose(H, H.T)
        assert np.linalg.eigvalsh(H).min() >= lam / 16 * (1 - 1e-12)

    def test_value_and_gradient_consistent(self, small_ds, rng):
        f = RegularizedLoss(small_ds, 1e-4)
        theta = rng.standard_normal(3)
        v, g = f.value_and_gradient(theta)
        assert v == f.value(theta)
        np.testing.assert_array_equal(g, f.gradient(theta))

    def test_no_overflow_at_large_scores(self, small_ds):
        v, g = RegularizedLoss(small_ds, 1e-4).value_and_gradient(np.full(3, 1e3))
        assert np.isfinite(v) and np.all(np.isfinite(g))
