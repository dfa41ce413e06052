"""Stage 2: differentially private re-synthesis of a stage-1 dataset.

The default generator releases, per (s, y) stratum, a noisy count, a noisy
mean and a noisy second-moment matrix of the clipped features (classical
Gaussian mechanism, replace-one adjacency, basic composition) and then
samples fresh points from the per-stratum Gaussians. Everything after the
releases is post-processing.

Any callable ``generator(syn1, cfg) -> (SyntheticDataset, PrivacyLedger)``
whose ledger stays within budget can be used in place of
:func:`generate_dp`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import STRATA, largest_remainder
from .stage1 import SyntheticDataset

EIGEN_FLOOR = 1e-6
_TOL = 1e-9


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class DpConfig:
    epsilon: float = 3.0
    delta: float = 1e-5
    ns2: Optional[int] = None  # None: same size as the input
    clip_bound: float = 3.0
    budget_split: tuple = (1 / 3, 1 / 3, 1 / 3)  # counts, means, covariances
    seed: int = 0
    fixed_columns: tuple = ()  # public constant columns: copied, never released

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.ns2 is not None and self.ns2 < 1:
            raise ValueError("ns2 must be positive")
        if not self.clip_bound > 0:
            raise ValueError("clip_bound must be positive")
        split = tuple(float(w) for w in self.budget_split)
        if len(split) != 3 or min(split) <= 0 or abs(math.fsum(split) - 1.0) > 1e-12:
            raise ValueError("budget_split needs three positive weights summing to 1")
        object.__setattr__(self, "budget_split", split)
        object.__setattr__(self, "fixed_columns", tuple(int(c) for c in self.fixed_columns))


@dataclass(frozen=True)
class LedgerEntry:
    mechanism: str
    sensitivity: float
    sigma: float
    epsilon: float
    delta: float


@dataclass
class PrivacyLedger:
    """Every Gaussian release made, with its calibration and budget share."""

    entries: list = field(default_factory=list)
    adjacency: str = "replace-one"
    composition: str = "basic"
    notes: str = ""

    @property
    def total_epsilon(self) -> float:
        return math.fsum(e.epsilon for e in self.entries)

    @property
    def total_delta(self) -> float:
        return math.fsum(e.delta for e in self.entries)

    def record(self, mechanism, sensitivity, eps, delta):
        sigma = gaussian_noise_scale(sensitivity, eps, delta)
        self.entries.append(LedgerEntry(mechanism, sensitivity, sigma, eps, delta))
        return sigma

    def to_dict(self):
        return {
            "adjacency": self.adjacency,
            "composition": self.composition,
            "notes": self.notes,
            "total_epsilon": self.total_epsilon,
            "total_delta": self.total_delta,
            "entries": [asdict(e) for e in self.entries],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d):
        return cls([LedgerEntry(**e) for e in d["entries"]], d.get("adjacency", "replace-one"),
                   d.get("composition", "basic"), d.get("notes", ""))


def gaussian_noise_scale(sensitivity: float, eps_share: float, delta_share: float) -> float:
    """sigma = sensitivity * sqrt(2 ln(1.25 / delta)) / eps.

    The classical bound only holds for eps <= 1.
    """
    if not sensitivity > 0:
        raise ValueError("sensitivity must be positive")
    if not 0 < delta_share < 1:
        raise ValueError("delta share must lie in (0, 1)")
    if not eps_share > 0:
        raise ValueError("epsilon share must be positive")
    if eps_share > 1:
        raise BudgetError(
            f"epsilon share {eps_share:g} > 1: the classical Gaussian calibration is invalid; "
            "split the budget across more mechanisms")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta_share)) / eps_share


def ledger_verify(ledger: PrivacyLedger, cfg: DpConfig) -> bool:
    """Recompute every sigma and check the composed totals against ``cfg``."""
    for e in ledger.entries:
        try:
            sigma = gaussian_noise_scale(e.sensitivity, e.epsilon, e.delta)
        except ValueError:
            return False
        if abs(sigma - e.sigma) > _TOL * max(1.0, sigma):
            return False
    eps, delta = ledger.total_epsilon, ledger.total_delta
    return eps <= cfg.epsilon * (1 + _TOL) and delta <= cfg.delta * (1 + _TOL)


def project_psd(M, floor=EIGEN_FLOOR):
    """Nearest symmetric matrix (Frobenius) with eigenvalues >= ``floor``."""
    S = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(S)
    out = (vecs * np.maximum(vals, floor)) @ vecs.T
    return 0.5 * (out + out.T)


@dataclass
class StratumRelease:
    stratum: tuple
    size: int  # true size, used for the sensitivities
    count: float
    mean: Optional[np.ndarray]
    second_moment: Optional[np.ndarray]
    covariance: Optional[np.ndarray]


def _shares(cfg: DpConfig, n_strata: int):
    out = []
    for w in cfg.budget_split:
        eps = w * cfg.epsilon / n_strata
        if eps > 1:
            raise BudgetError(f"per-mechanism epsilon {eps:g} exceeds 1; split the budget further")
        out.append((eps, w * cfg.delta / n_strata))
    return out


def _plan(stats, d, cfg: DpConfig):
    """Mechanisms to run as ``(name, sensitivity, eps, delta)``.

    When every stratum is nonempty the shares add up to the full budget;
    the last share absorbs float rounding so the composed totals equal the
    configured (epsilon, delta) exactly.
    """
    B = cfg.clip_bound
    (e_cnt, d_cnt), (e_mean, d_mean), (e_cov, d_cov) = _shares(cfg, len(STRATA))
    plan = []
    for (sv, yv), m in stats:
        tag = f"s={sv},y={yv:+d}"
        plan.append([f"count[{tag}]", 1.0, e_cnt, d_cnt])
        if m:
            plan.append([f"mean[{tag}]", 2.0 * B * math.sqrt(d) / m, e_mean, d_mean])
            plan.append([f"second_moment[{tag}]", 2.0 * B * B * d / m, e_cov, d_cov])
    if all(m for _, m in stats):
        plan[-1][2] = cfg.epsilon - math.fsum(p[2] for p in plan[:-1])
        plan[-1][3] = cfg.delta - math.fsum(p[3] for p in plan[:-1])
    return plan


def release_moments(X, s, y, cfg: DpConfig, rng, zero_noise=False):
    """Noisy per-stratum counts, means and covariances of clipped features.

    ``zero_noise`` is a test switch: sigmas are computed and recorded in the
    ledger but no noise is drawn, so the releases equal the clipped sample
    statistics.
    """
    B = cfg.clip_bound
    Xc = np.clip(np.asarray(X, dtype=float), -B, B)
    d = Xc.shape[1]
    groups = [Xc[(s == sv) & (y == yv)] for sv, yv in STRATA]
    plan = _plan([(st, g.shape[0]) for st, g in zip(STRATA, groups)], d, cfg)
    ledger = PrivacyLedger(notes="stratum sizes in the sensitivities are the true (pre-noise) counts")
    sigmas = iter([ledger.record(*p) for p in plan])
    scale = 0.0 if zero_noise else 1.0

    releases = []
    for st, rows in zip(STRATA, groups):
        m = rows.shape[0]
        count = m + scale * next(sigmas) * rng.standard_normal()
        if m == 0:
            releases.append(StratumRelease(st, 0, count, None, None, None))
            continue
        mean = rows.mean(axis=0) + scale * next(sigmas) * rng.standard_normal(d)
        sig = next(sigmas)
        noise = np.triu(rng.standard_normal((d, d)))
        noise = noise + np.triu(noise, 1).T
        second = rows.T @ rows / m + scale * sig * noise
        cov = project_psd(second - np.outer(mean, mean))
        releases.append(StratumRelease(st, m, count, mean, second, cov))
    return releases, ledger


def generate_dp(syn1: SyntheticDataset, cfg: DpConfig, zero_noise=False):
    """Stratified Gaussian release; returns ``(SyntheticDataset, PrivacyLedger)``."""
    data = syn1.data
    ns2 = len(data) if cfg.ns2 is None else cfg.ns2
    rng = np.random.default_rng(cfg.seed)
    fixed = list(cfg.fixed_columns)
    free = [j for j in range(data.X.shape[1]) if j not in fixed]
    consts = data.X[0, fixed]
    if fixed and not np.all(data.X[:, fixed] == consts):
        raise ValueError("fixed columns must be constant in the input")
    releases, ledger = release_moments(data.X[:, free], data.s, data.y, cfg, rng, zero_noise)

    usable = np.array([r.mean is not None for r in releases])
    probs = np.where(usable, np.maximum([r.count for r in releases], 0.0), 0.0)
    if probs.sum() <= 0:
        probs = usable.astype(float)
    alloc = largest_remainder(probs, ns2)

    B = cfg.clip_bound
    xs, ss, ys = [], [], []
    for r, k in zip(releases, alloc):
        if k == 0:
            continue
        pts = rng.multivariate_normal(r.mean, r.covariance, size=k, method="eigh")
        xs.append(np.clip(pts, -B, B))
        ss.append(np.full(k, r.stratum[0]))
        ys.append(np.full(k, r.stratum[1]))
    X = np.empty((ns2, data.X.shape[1]))
    X[:, free] = np.vstack(xs)
    X[:, fixed] = consts
    out = data.replace(X=X, s=np.concatenate(ss), y=np.concatenate(ys))
    if not ledger_verify(ledger, cfg):
        raise BudgetError("privacy ledger exceeds the configured budget")
    return SyntheticDataset(out, "stage2", syn1.client, syn1.digest), ledger


Generator = Callable[[SyntheticDataset, DpConfig], tuple]
