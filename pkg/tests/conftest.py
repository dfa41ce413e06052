import numpy as np
import pytest

from fairsynth.data import Dataset


def random_dataset(rng, N, n, p_s=0.5, shift=0.0):
    """N points with n-1 Gaussian features; labels from a noisy linear rule."""
    s = (rng.random(N) < p_s).astype(int)
    s[0], s[-1] = 0, 1  # both groups present
    X = rng.standard_normal((N, n - 1)) + shift * s[:, None]
    w = rng.standard_normal(n - 1)
    y = np.where(X @ w + 0.8 * rng.standard_normal(N) > 0, 1, -1)
    y[0], y[-1] = 1, -1  # both labels present
    return Dataset(X, s, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_ds(rng):
    return random_dataset(rng, 20, 3)


# criterion number -> (status, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {detail}")
