"""Stage 1: learn fairness-mitigated synthetic features by bilevel penalty
optimization.

The outer variables are the synthetic nonsensitive features ``xhat``; the
synthetic (s, y) pairs stay fixed. The inner problem trains a regularized
logistic model on the synthetic data, and the outer objective scores that
model on the client's real data: loss plus rho_o/2 times the squared
decision-boundary covariance, plus a small ridge term on ``xhat``.
Gradients through the inner argmin come from the implicit function
theorem: one SPD solve with the inner Hessian per outer step.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .data import Dataset, assign_synthetic_pairs, STRATA
from .model import RegularizedLoss, sigmoid, softplus
from .optim import AdamConfig, AdamState, InnerSolveConfig, LbfgsResult, adam_step, lbfgs_minimize


class Mode(str, enum.Enum):
    SP = "sp"
    EO = "eo"
    SP_PLUS_EO = "sp+eo"


@dataclass(frozen=True)
class PenaltyConfig:
    """Outer-problem settings.

    ``ns1=None`` means the real dataset size. ``k_max=None`` defers to
    ``AdamConfig.k_max``. ``strict_sum`` makes SP+EO the literal sum of the
    two objectives (loss and ridge counted twice). ``fixed_columns`` lists
    feature columns held at their initial values (e.g. an intercept).
    """

    rho_o: float = 0.0
    lambda_xhat: float = 1e-4
    lambda_theta: float = 1e-4
    mode: Mode = Mode.SP
    k_max: Optional[int] = None
    ns1: Optional[int] = None
    seed: int = 0
    init: str = "auto"  # auto | real | strata
    jitter: float = 0.01
    strict_sum: bool = False
    fixed_columns: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "fixed_columns", tuple(int(c) for c in self.fixed_columns))
        if self.rho_o < 0:
            raise ValueError("rho_o must be nonnegative")
        if self.lambda_xhat <= 0 or self.lambda_theta <= 0:
            raise ValueError("regularization parameters must be positive")
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be positive")
        if self.ns1 is not None and self.ns1 < 1:
            raise ValueError("ns1 must be positive")
        if self.init not in ("auto", "real", "strata"):
            raise ValueError(f"unknown init {self.init!r}")

    def digest(self) -> str:
        d = asdict(self)
        d["mode"] = self.mode.value
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """A synthetic dataset plus where it came from.

    ``stage`` is ``"stage1"`` or ``"stage2"``; ``client`` identifies the
    producing client so the server can check that every dataset it receives
    was made by a single client from its own data.
    """

    data: Dataset
    stage: str
    client: Optional[int] = None
    digest: str = ""

    @property
    def xhat(self):
        return self.data.X

    @property
    def pairs(self):
        return np.column_stack([self.data.s, self.data.y])

    def __len__(self):
        return len(self.data)

    def with_xhat(self, xhat) -> "SyntheticDataset":
        return SyntheticDataset(self.data.replace(X=xhat), self.stage, self.client, self.digest)


@dataclass
class PenaltyComponents:
    loss: float
    penalty_sp: float
    penalty_eo: float
    regularizer: float
    cov_sp: float
    cov_eo: float
    theta: np.ndarray
    inner: LbfgsResult

    @property
    def penalty(self):
        return self.penalty_sp + self.penalty_eo


class _Outer:
    """Real-data quantities reused across outer iterations."""

    def __init__(self, real: Dataset, cfg: PenaltyConfig):
        self.cfg = cfg
        self.A = real.A
        self.y = real.y.astype(float)
        N = len(real)
        sc = real.s.astype(float) - real.s.mean()
        self.u_sp = self.A.T @ sc / N
        self.u_eo = self.A.T @ (sc * (1.0 + self.y) / 2.0) / N
        self.use_sp = cfg.mode in (Mode.SP, Mode.SP_PLUS_EO)
        self.use_eo = cfg.mode in (Mode.EO, Mode.SP_PLUS_EO)
        self.twice = cfg.mode is Mode.SP_PLUS_EO and cfg.strict_sum

    def value_terms(self, theta, xhat):
        cfg = self.cfg
        ns, nx = xhat.shape
        n = nx + 1
        loss = float(np.mean(softplus(-self.y * (self.A @ theta))))
        c_sp = float(self.u_sp @ theta)
        c_eo = float(self.u_eo @ theta)
        p_sp = 0.5 * cfg.rho_o * c_sp ** 2 if self.use_sp else 0.0
        p_eo = 0.5 * cfg.rho_o * c_eo ** 2 if self.use_eo else 0.0
        reg = cfg.lambda_xhat / (2.0 * (ns * n) ** 2) * float(np.sum(xhat * xhat))
        mult = 2.0 if self.twice else 1.0
        value = mult * (loss + reg) + p_sp + p_eo
        return value, loss, p_sp, p_eo, reg, c_sp, c_eo

    def dvalue_dtheta(self, theta, c_sp, c_eo):
        z = self.A @ theta
        g = self.A.T @ (-self.y * sigmoid(-self.y * z)) / len(self.y)
        if self.twice:
            g = 2.0 * g
        if self.use_sp:
            g = g + self.cfg.rho_o * c_sp * self.u_sp
        if self.use_eo:
            g = g + self.cfg.rho_o * c_eo * self.u_eo
        return g


def _inner_cfg(cfg: PenaltyConfig, inner: Optional[InnerSolveConfig]) -> InnerSolveConfig:
    inner = inner or InnerSolveConfig()
    return inner.with_(lambda_theta=cfg.lambda_theta)


def solve_inner(syn_data: Dataset, lambda_theta: float, inner: InnerSolveConfig, theta0=None):
    """Train the regularized logistic model on ``syn_data``."""
    loss = RegularizedLoss(syn_data, lambda_theta)
    start = np.zeros(syn_data.n) if theta0 is None else theta0
    return lbfgs_minimize(loss.value_and_gradient, start, inner)


def _evaluate(outer: _Outer, syn: SyntheticDataset, inner: InnerSolveConfig, theta0=None, with_grad=True):
    theta, rec = solve_inner(syn.data, outer.cfg.lambda_theta, inner, theta0)
    xhat = syn.xhat
    value, loss, p_sp, p_eo, reg, c_sp, c_eo = outer.value_terms(theta, xhat)
    comps = PenaltyComponents(loss, p_sp, p_eo, reg, c_sp, c_eo, theta, rec)
    if not with_grad:
        return value, comps, None
    return value, comps, _hypergradient(outer, syn, theta, c_sp, c_eo)


def _hypergradient(outer: _Outer, syn: SyntheticDataset, theta, c_sp, c_eo):
    cfg = outer.cfg
    data = syn.data
    A_hat = data.A
    y_hat = data.y.astype(float)
    ns, n = A_hat.shape
    mu = cfg.lambda_theta / n ** 2

    z = A_hat @ theta
    phi = -y_hat * sigmoid(-y_hat * z)
    p = sigmoid(z)
    w = p * (1.0 - p)
    H = (A_hat * w[:, None]).T @ A_hat / ns
    H[np.diag_indices_from(H)] += mu
    try:
        factor = scipy.linalg.cho_factor(H, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"inner Hessian is not positive definite (eigenvalue floor lambda_theta/n^2 = {mu:g})"
        ) from exc

    # adjoint form of H J = -C: v = H^{-1} dP/dtheta, grad_i = -v^T C_i
    v = scipy.linalg.cho_solve(factor, outer.dvalue_dtheta(theta, c_sp, c_eo))
    vx, tx = v[:-1], theta[:-1]
    grad = -(np.outer(phi, vx) + np.outer(w * (A_hat @ v), tx)) / ns
    reg_coef = cfg.lambda_xhat / (ns * n) ** 2
    if outer.twice:
        reg_coef *= 2.0
    return grad + reg_coef * syn.xhat


def penalty_objective(real_ds: Dataset, syn: SyntheticDataset, cfg: PenaltyConfig,
                      inner: Optional[InnerSolveConfig] = None, theta0=None):
    """Outer objective at the current synthetic features.

    Returns ``(value, PenaltyComponents)``; the components carry the inner
    solution and its convergence record.
    """
    value, comps, _ = _evaluate(_Outer(real_ds, cfg), syn, _inner_cfg(cfg, inner), theta0, with_grad=False)
    return value, comps


def hypergradient(real_ds: Dataset, syn: SyntheticDataset, cfg: PenaltyConfig,
                  inner: Optional[InnerSolveConfig] = None, theta=None):
    """Gradient of the outer objective with respect to every ``xhat`` entry.

    ``theta`` may be passed when the inner problem has already been solved
    at ``syn``; otherwise it is solved here.
    """
    outer = _Outer(real_ds, cfg)
    if theta is None:
        theta, _ = solve_inner(syn.data, cfg.lambda_theta, _inner_cfg(cfg, inner))
    theta = np.asarray(theta, dtype=float)
    return _hypergradient(outer, syn, theta, float(outer.u_sp @ theta), float(outer.u_eo @ theta))


@dataclass
class Stage1Trace:
    objective: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    penalty_sp: list = field(default_factory=list)
    penalty_eo: list = field(default_factory=list)
    regularizer: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    inner_grad_norm: list = field(default_factory=list)
    inner_failures: int = 0
    final_inner: Optional[dict] = None

    def __len__(self):
        return len(self.objective)

    def append(self, value, comps: PenaltyComponents, gnorm):
        self.objective.append(value)
        self.loss.append(comps.loss)
        self.penalty_sp.append(comps.penalty_sp)
        self.penalty_eo.append(comps.penalty_eo)
        self.regularizer.append(comps.regularizer)
        self.grad_norm.append(gnorm)
        self.inner_iterations.append(comps.inner.iterations)
        self.inner_grad_norm.append(comps.inner.grad_norm)
        if not comps.inner.converged:
            self.inner_failures += 1

    def to_csv(self, path):
        cols = ["objective", "loss", "penalty_sp", "penalty_eo", "regularizer",
                "grad_norm", "inner_iterations", "inner_grad_norm"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", *cols])
            for k in range(len(self)):
                w.writerow([k + 1, *(repr(getattr(self, c)[k]) for c in cols)])


def initial_synthetic(real_ds: Dataset, cfg: PenaltyConfig, client=None) -> tuple[SyntheticDataset, bool]:
    """Pairs plus starting features; second item says whether ``xhat`` is a copy of the real features."""
    N = len(real_ds)
    ns1 = N if cfg.ns1 is None else cfg.ns1
    if ns1 > N:
        raise ValueError(f"ns1={ns1} exceeds the real dataset size {N}")
    pairs = assign_synthetic_pairs(real_ds, ns1)
    from_real = ns1 == N and cfg.init in ("auto", "real")
    if from_real:
        xhat = real_ds.X.copy()
    elif cfg.init == "real":
        raise ValueError("init='real' requires ns1 equal to the real dataset size")
    else:
        rng = np.random.default_rng(cfg.seed)
        xhat = np.empty((ns1, real_ds.X.shape[1]))
        for sv, yv in STRATA:
            rows = (pairs[:, 0] == sv) & (pairs[:, 1] == yv)
            if not rows.any():
                continue
            src = (real_ds.s == sv) & (real_ds.y == yv)
            xhat[rows] = real_ds.X[src].mean(axis=0)
        xhat += cfg.jitter * rng.standard_normal(xhat.shape)
        for c in cfg.fixed_columns:
            xhat[:, c] = real_ds.X[0, c]
    data = real_ds.replace(X=xhat, s=pairs[:, 0], y=pairs[:, 1])
    return SyntheticDataset(data, "stage1", client, cfg.digest()), from_real


def learn_stage1(real_ds: Dataset, cfg: PenaltyConfig, adam: AdamConfig = AdamConfig(),
                 inner: Optional[InnerSolveConfig] = None, client=None):
    """Run the outer Adam loop; returns ``(SyntheticDataset, Stage1Trace)``.

    With ``rho_o == 0`` and synthetic features initialized from the real
    ones, the real data is returned as is (the unpenalized baseline).
    """
    syn, from_real = initial_synthetic(real_ds, cfg, client)
    trace = Stage1Trace()
    if cfg.rho_o == 0 and from_real:
        return syn, trace

    k_max = cfg.k_max if cfg.k_max is not None else adam.k_max
    inner_cfg = _inner_cfg(cfg, inner)
    outer = _Outer(real_ds, cfg)
    xhat = syn.xhat.copy()
    state = AdamState.zeros(xhat.shape)
    theta = None
    comps = None
    for k in range(1, k_max + 1):
        syn = syn.with_xhat(xhat)
        value, comps, grad = _evaluate(outer, syn, inner_cfg, theta)
        gnorm = float(np.linalg.norm(grad))
        if not (np.isfinite(value) and np.isfinite(gnorm)):
            raise FloatingPointError(f"non-finite outer objective at iteration {k}")
        trace.append(value, comps, gnorm)
        theta = comps.theta
        if cfg.fixed_columns:
            grad[:, list(cfg.fixed_columns)] = 0.0
        state, delta = adam_step(state, grad, adam, k)
        xhat = xhat + delta
    trace.final_inner = comps.inner.as_dict() if comps is not None else None
    return syn.with_xhat(xhat), trace
