"""Unconstrained solvers: L-BFGS with a strong Wolfe line search, and Adam."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class InnerSolveConfig:
    lambda_theta: float = 1e-4
    max_iterations: int = 100
    gradient_tolerance: float = 1e-8
    lbfgs_memory: int = 10
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    # once the gradient test passes, keep going until the quasi-Newton step
    # (an estimate of the distance to the minimizer) is this small too
    step_tolerance: float = 1e-9

    def __post_init__(self):
        if self.lambda_theta <= 0:
            raise ValueError("lambda_theta must be positive")
        if self.max_iterations < 1 or self.lbfgs_memory < 1:
            raise ValueError("max_iterations and lbfgs_memory must be positive")
        if self.gradient_tolerance <= 0 or self.step_tolerance <= 0:
            raise ValueError("gradient_tolerance and step_tolerance must be positive")
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")

    def with_(self, **kw) -> "InnerSolveConfig":
        return replace(self, **kw)


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    wolfe_failures: int = 0
    function_evals: int = 0
    message: str = ""
    steps: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "wolfe_failures": self.wolfe_failures,
            "function_evals": self.function_evals,
        }


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic through (a, fa, da), (b, fb, db); None if undefined."""
    if a == b or not np.isfinite(fb) or not np.isfinite(db):
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = np.copysign(np.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    out = b - (b - a) * (db + d2 - d1) / denom
    return out if np.isfinite(out) else None


def strong_wolfe(phi, alpha1, c1=1e-4, c2=0.9, alpha_max=1e10, max_bracket=30, max_zoom=40):
    """Step length satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(value, slope, payload)``. When a trial value
    is within a few ulps of ``phi(0)`` the function values carry no
    information, and sufficient decrease is judged from the slopes instead
    (trapezoid estimate of the decrease, exact for quadratics).
    Returns ``(alpha, value, slope, payload, evals)``; raises
    :class:`LineSearchError` when no acceptable step is found.
    """
    f0, d0, _ = phi(0.0)
    if not d0 < 0:
        raise LineSearchError("not a descent direction")
    slack = 8.0 * _EPS * abs(f0)
    evals = 0

    def armijo_ok(a, fa, da):
        if fa <= f0 + c1 * a * d0:
            return True
        return abs(fa - f0) <= slack and da <= (2.0 * c1 - 1.0) * d0

    def worse(fa, fb):
        return fa >= fb and fa - fb > slack

    def curvature_ok(da):
        return abs(da) <= -c2 * d0

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        nonlocal evals
        for _ in range(max_zoom):
            width = abs(hi - lo)
            a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            if a is None or not (left + 0.1 * width <= a <= right - 0.1 * width):
                a = 0.5 * (lo + hi)
            fa, da, pa = phi(a)
            evals += 1
            if not np.isfinite(fa):
                hi, fhi, dhi = a, np.inf, np.nan
                continue
            if not armijo_ok(a, fa, da) or worse(fa, flo):
                hi, fhi, dhi = a, fa, da
            else:
                if curvature_ok(da):
                    return a, fa, da, pa
                if da * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, fa, da
            if width <= _EPS * max(1.0, right):
                break
        raise LineSearchError("zoom did not find a strong Wolfe point")

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = min(alpha1, alpha_max)
    for i in range(max_bracket):
        fa, da, pa = phi(a)
        evals += 1
        if not np.isfinite(fa):
            # overshoot into overflow: shrink toward the last good point
            a = 0.5 * (a_prev + a)
            continue
        if not armijo_ok(a, fa, da) or (i > 0 and worse(fa, f_prev)):
            return (*zoom(a_prev, f_prev, d_prev, a, fa, da), evals)
        if curvature_ok(da):
            return a, fa, da, pa, evals
        if da >= 0:
            return (*zoom(a, fa, da, a_prev, f_prev, d_prev), evals)
        a_prev, f_prev, d_prev = a, fa, da
        a = min(2.0 * a, alpha_max)
    raise LineSearchError("bracketing phase exhausted")


def lbfgs_minimize(fun, x0, cfg: InnerSolveConfig = InnerSolveConfig(), record_steps=False):
    """Minimize a smooth function with L-BFGS.

    ``fun(x)`` returns ``(value, gradient)``. Returns ``(x, LbfgsResult)``;
    on line-search failure the current (best) iterate is returned with
    ``converged=False`` instead of raising.

    Stops when the gradient norm is within ``gradient_tolerance`` and the
    quasi-Newton step is within ``step_tolerance`` (the step test is skipped
    while there is no curvature memory, e.g. at an optimal start). On flat,
    ill-conditioned problems a small gradient alone can leave the iterate
    far from the minimizer.
    """
    x = np.array(x0, dtype=float, copy=True)
    f, g = fun(x)
    nfev = 1
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    gnorm = float(np.linalg.norm(g))
    S, Y, RHO = deque(maxlen=cfg.lbfgs_memory), deque(maxlen=cfg.lbfgs_memory), deque(maxlen=cfg.lbfgs_memory)
    failures = 0
    steps = []
    it = 0
    message = "gradient tolerance met"
    while True:
        if gnorm <= cfg.gradient_tolerance and not S:
            break
        if it >= cfg.max_iterations:
            message = "iteration limit"
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(list(zip(S, Y, RHO))):
            al = rho * (s @ q)
            q -= al * y
            alphas.append(al)
        if S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        for (s, y, rho), al in zip(zip(S, Y, RHO), reversed(alphas)):
            be = rho * (y @ q)
            q += (al - be) * s
        d = -q
        if gnorm <= cfg.gradient_tolerance and np.linalg.norm(d) <= cfg.step_tolerance:
            break
        if not (d @ g) < 0:
            S.clear(), Y.clear(), RHO.clear()
            d = -g

        def phi(a, d=d):
            xa = x + a * d
            fa, ga = fun(xa)
            return fa, float(ga @ d), (xa, ga)

        alpha1 = 1.0 if S else min(1.0, 1.0 / gnorm)
        try:
            a, f_new, _, (x_new, g_new), ne = strong_wolfe(phi, alpha1, cfg.wolfe_c1, cfg.wolfe_c2)
        except LineSearchError:
            if gnorm <= cfg.gradient_tolerance:
                break  # roundoff floor reached after convergence
            failures += 1
            if S:
                # retry once along steepest descent with fresh memory
                S.clear(), Y.clear(), RHO.clear()
                continue
            message = "line search failed"
            break
        nfev += ne + 1
        if record_steps:
            steps.append((x.copy(), d.copy(), a, f, float(g @ d), f_new, float(g_new @ d)))
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s), Y.append(y), RHO.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        it += 1
    return x, LbfgsResult(x=x, fun=float(f), grad_norm=gnorm, iterations=it,
                          converged=gnorm <= cfg.gradient_tolerance, wolfe_failures=failures,
                          function_evals=nfev, message=message if gnorm > cfg.gradient_tolerance
                          else "gradient tolerance met", steps=steps)


@dataclass(frozen=True)
class AdamConfig:
    step_size: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8
    k_max: int = 1000

    def __post_init__(self):
        if self.step_size <= 0 or self.epsilon_hat <= 0 or self.k_max < 1:
            raise ValueError("invalid Adam configuration")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))


def adam_step(state: AdamState, gradient, cfg: AdamConfig, iteration: int):
    """One bias-corrected Adam update; returns ``(new_state, delta)``."""
    if iteration < 1:
        raise ValueError("iteration counts from 1")
    g = np.asarray(gradient, dtype=float)
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1 ** iteration)
    v_hat = v / (1.0 - cfg.beta2 ** iteration)
    delta = -cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.epsilon_hat)
    return AdamState(m, v), delta
