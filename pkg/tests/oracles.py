"""Independent reference implementations used by the tests."""

import numpy as np


def damped_newton(ds, lambda_theta, max_iter=200):
    """Newton's method with backtracking on the regularized logistic loss.

    Written straight from the formulas, without the package's loss class.
    Runs until the Newton step stalls at roundoff: a gradient threshold
    alone is loose on near-separable data, where the curvature is tiny.
    """
    A = np.column_stack([ds.X, ds.s]).astype(float)
    y = ds.y.astype(float)
    N, n = A.shape
    mu = lambda_theta / n ** 2

    def value(t):
        return np.mean(np.logaddexp(0.0, -y * (A @ t))) + 0.5 * mu * t @ t

    theta = np.zeros(n)
    for _ in range(max_iter):
        z = A @ theta
        p = 1.0 / (1.0 + np.exp(-z))
        g = A.T @ (-y / (1.0 + np.exp(y * z))) / N + mu * theta
        H = (A * (p * (1 - p))[:, None]).T @ A / N + mu * np.eye(n)
        step = np.linalg.solve(H, g)
        if np.linalg.norm(step) <= 1e-15 * (1.0 + np.linalg.norm(theta)):
            break
        t, f0 = 1.0, value(theta)
        while value(theta - t * step) > f0 - 0.25 * t * (g @ step) and t > 1e-12:
            t *= 0.5
        theta = theta - t * step
    return theta


def fairness_brute_force(s, y, yhat):
    """SPD and EOD by explicit counting loops."""
    def rate(cond):
        hits = total = 0
        for si, yi, pi in zip(s, y, yhat):
            if cond(si, yi):
                total += 1
                hits += pi == 1
        return hits / total if total else float("nan")

    spd = rate(lambda si, yi: si == 1) - rate(lambda si, yi: si == 0)
    eod = rate(lambda si, yi: si == 1 and yi == 1) - rate(lambda si, yi: si == 0 and yi == 1)
    return spd, eod


def penalty_value_direct(real, syn, rho, lambda_xhat, lambda_theta, mode="sp"):
    """Outer objective composed term by term from the formulas."""
    theta = damped_newton(syn, lambda_theta)
    A = np.column_stack([real.X, real.s]).astype(float)
    y = real.y.astype(float)
    N = len(y)
    loss = np.mean(np.log1p(np.exp(-y * (A @ theta))))
    sc = real.s - real.s.mean()
    cov_sp = np.sum(sc * (A @ theta)) / N
    cov_eo = np.sum(sc * (1 + y) / 2 * (A @ theta)) / N
    ns, n = syn.X.shape[0], syn.X.shape[1] + 1
    value = loss + lambda_xhat / (2 * (ns * n) ** 2) * np.sum(syn.X ** 2)
    if mode in ("sp", "sp+eo"):
        value += rho / 2 * cov_sp ** 2
    if mode in ("eo", "sp+eo"):
        value += rho / 2 * cov_eo ** 2
    return value


def inner_min_eigenvalue(syn, theta, lambda_theta):
    A = np.column_stack([syn.X, syn.s]).astype(float)
    p = 1 / (1 + np.exp(-(A @ theta)))
    H = (A * (p * (1 - p))[:, None]).T @ A / len(A) + lambda_theta / A.shape[1] ** 2 * np.eye(A.shape[1])
    return np.linalg.eigvalsh(H).min()


def fd_hypergradient(real, syn, cfg, inner, h=1e-5):
    """Central differences of the outer objective over every synthetic feature.

    Each probe re-solves the inner problem from zero. A warm start at the
    unperturbed optimum can already satisfy the gradient tolerance, which
    would freeze theta and zero out small derivatives.
    """
    from fairsynth.stage1 import penalty_objective

    X = np.array(syn.xhat)
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            vals = []
            for sign in (1, -1):
                Xp = X.copy()
                Xp[i, j] += sign * h
                vals.append(penalty_objective(real, syn.with_xhat(Xp), cfg, inner)[0])
            out[i, j] = (vals[0] - vals[1]) / (2 * h)
    return out


def relative_error(g, fd, floor=1e-8):
    """Per-coordinate |g - fd| / max(|g|, |fd|, floor).

    Central differences with h = 1e-5 cannot resolve derivatives much below
    eps * |P| / h ~ 1e-11, so coordinates under ``floor`` in both arrays are
    compared on that absolute scale instead.
    """
    scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)
    return np.abs(g - fd) / scale


def random_instance(rng, modes=("sp", "eo", "sp+eo"), max_N=30, max_n=4, max_ns=15, min_eig=1e-3):
    """Random (real, synthetic, PenaltyConfig) triple for hypergradient checks.

    Instances whose inner Hessian has an eigenvalue below ``min_eig`` are
    redrawn: near-separable synthetic sets make the inner argmin so flat
    that finite differences of it are dominated by solver tolerance.
    """
    from fairsynth.data import Dataset
    from fairsynth.stage1 import PenaltyConfig, SyntheticDataset

    while True:
        N = int(rng.integers(10, max_N + 1))
        n = int(rng.integers(2, max_n + 1))
        ns = int(rng.integers(3, max_ns + 1))
        X = rng.standard_normal((N, n - 1))
        s = rng.integers(0, 2, N)
        s[:2] = [0, 1]
        y = np.where(X[:, 0] + 0.8 * s + rng.standard_normal(N) > 0, 1, -1)
        y[:4] = [1, -1, 1, -1]
        real = Dataset(X, s, y)
        syn = SyntheticDataset(Dataset(rng.standard_normal((ns, n - 1)), rng.integers(0, 2, ns),
                                       rng.choice([-1, 1], ns)), "stage1")
        cfg = PenaltyConfig(rho_o=float(rng.choice([1.0, 10.0, 100.0])), mode=str(rng.choice(modes)))
        if inner_min_eigenvalue(syn.data, damped_newton(syn.data, cfg.lambda_theta), cfg.lambda_theta) >= min_eig:
            return real, syn, cfg
