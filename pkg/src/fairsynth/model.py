"""Linear classifier and the (regularized) logistic loss."""

from __future__ import annotations

import numpy as np


def softplus(z):
    """log(1 + exp(z)), finite for any finite z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    hi = z > 35.0
    lo = z < -35.0
    mid = ~(hi | lo)
    out[hi] = z[hi]
    out[lo] = np.exp(z[lo])
    out[mid] = np.log1p(np.exp(z[mid]))
    return out


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def predict(theta, a):
    """Labels sign(a @ theta) in {-1, +1}; a zero score maps to +1.

    ``a`` may be a single feature vector or a matrix of rows.
    """
    theta = np.asarray(theta, dtype=float)
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != theta.shape[0]:
        raise ValueError(f"feature length {a.shape[-1]} != parameter length {theta.shape[0]}")
    scores = a @ theta
    return np.where(scores >= 0, 1, -1)


def _check(A, theta):
    if A.shape[1] != theta.shape[0]:
        raise ValueError(f"feature length {A.shape[1]} != parameter length {theta.shape[0]}")


def logistic_loss(ds, theta) -> float:
    """Mean of log(1 + exp(-y a^T theta)) over ``ds``."""
    theta = np.asarray(theta, dtype=float)
    A = ds.A
    _check(A, theta)
    return float(np.mean(softplus(-ds.y * (A @ theta))))


class RegularizedLoss:
    """Logistic loss plus ``lambda_theta / (2 n^2) * ||theta||^2``.

    Strictly convex, so the minimizer over theta is unique. ``A`` and ``y``
    are cached at construction; value/gradient/hessian accept theta only.
    """

    def __init__(self, ds, lambda_theta: float):
        if lambda_theta <= 0:
            raise ValueError("lambda_theta must be positive")
        self.A = ds.A
        self.y = ds.y.astype(float)
        self.n = self.A.shape[1]
        self.mu = lambda_theta / self.n ** 2

    def value(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        _check(self.A, theta)
        margins = self.y * (self.A @ theta)
        return float(np.mean(softplus(-margins)) + 0.5 * self.mu * theta @ theta)

    def gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        _check(self.A, theta)
        margins = self.y * (self.A @ theta)
        coef = -self.y * sigmoid(-margins)
        return self.A.T @ coef / len(self.y) + self.mu * theta

    def value_and_gradient(self, theta):
        theta = np.asarray(theta, dtype=float)
        _check(self.A, theta)
        margins = self.y * (self.A @ theta)
        val = float(np.mean(softplus(-margins)) + 0.5 * self.mu * theta @ theta)
        coef = -self.y * sigmoid(-margins)
        return val, self.A.T @ coef / len(self.y) + self.mu * theta

    def hessian(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        _check(self.A, theta)
        p = sigmoid(self.A @ theta)
        w = p * (1.0 - p)
        H = (self.A * w[:, None]).T @ self.A / len(self.y)
        H[np.diag_indices_from(H)] += self.mu
        return H


def regularized_loss(ds, theta, lambda_theta: float) -> float:
    return RegularizedLoss(ds, lambda_theta).value(theta)
