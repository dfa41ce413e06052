"""Group fairness measures for a linear classifier.

SPD and EOD are returned signed (group s=1 minus group s=0). When a
conditioning group is empty they are ``nan``, never 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import predict


def covariance_sp(ds, theta) -> float:
    """(1/N) sum_i (s_i - mean(s)) a_i^T theta."""
    s = ds.s.astype(float)
    return float(np.mean((s - s.mean()) * (ds.A @ np.asarray(theta, dtype=float))))


def covariance_eo(ds, theta) -> float:
    """Like :func:`covariance_sp` but weighted by (1 + y_i) / 2.

    The centering and the 1/N factor still run over all N points.
    """
    s = ds.s.astype(float)
    w = (1.0 + ds.y) / 2.0
    return float(np.mean((s - s.mean()) * w * (ds.A @ np.asarray(theta, dtype=float))))


def _rate(pred_pos, mask):
    m = int(mask.sum())
    if m == 0:
        return math.nan
    return float(np.sum(pred_pos & mask)) / m


def spd(ds, theta) -> float:
    pos = predict(theta, ds.A) == 1
    return _rate(pos, ds.s == 1) - _rate(pos, ds.s == 0)


def eod(ds, theta) -> float:
    pos = predict(theta, ds.A) == 1
    tp = ds.y == 1
    return _rate(pos, (ds.s == 1) & tp) - _rate(pos, (ds.s == 0) & tp)


def accuracy(ds, theta) -> float:
    return float(np.mean(predict(theta, ds.A) == ds.y))


@dataclass(frozen=True)
class FairnessReport:
    accuracy: float
    covariance_sp: float
    covariance_eo: float
    spd: float
    eod: float
    # counts of predicted-positive / group size, overall and among y=+1
    group_counts: dict

    @property
    def spd_defined(self):
        return not math.isnan(self.spd)

    @property
    def eod_defined(self):
        return not math.isnan(self.eod)

    def as_dict(self):
        return asdict(self)


def evaluate(ds, theta) -> FairnessReport:
    theta = np.asarray(theta, dtype=float)
    pos = predict(theta, ds.A) == 1
    counts = {}
    for g in (0, 1):
        grp = ds.s == g
        tp = grp & (ds.y == 1)
        counts[f"s{g}"] = int(grp.sum())
        counts[f"s{g}_pred_pos"] = int((grp & pos).sum())
        counts[f"s{g}_y_pos"] = int(tp.sum())
        counts[f"s{g}_y_pos_pred_pos"] = int((tp & pos).sum())
    return FairnessReport(
        accuracy=accuracy(ds, theta),
        covariance_sp=covariance_sp(ds, theta),
        covariance_eo=covariance_eo(ds, theta),
        spd=spd(ds, theta),
        eod=eod(ds, theta),
        group_counts=counts,
    )
