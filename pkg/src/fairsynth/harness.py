"""Client/server orchestration, communication accounting, sweeps and reports."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .data import (ColumnSchema, Dataset, add_intercept, concat, load_dataset,
                   partition_clients, standardize, train_test_split)
from .fairness import evaluate
from .model import RegularizedLoss
from .optim import AdamConfig, InnerSolveConfig, lbfgs_minimize
from .stage1 import Mode, PenaltyConfig, learn_stage1
from .stage2 import DpConfig, PrivacyLedger, generate_dp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BiasSpec:
    """Parameters of the seeded biased-data generator.

    Group s=1 is favored. Labels come from a noisy linear rule with a
    positive offset (high base rate); then each s=0 positive is flipped to
    -1 with probability ``bias_rate``. ``separation`` shifts the mean of
    the first feature for s=1.
    """

    n_samples: int = 2000
    n_features: int = 6  # full feature length n, sensitive attribute included
    p_sensitive: float = 0.8
    separation: float = 0.5
    bias_rate: float = 0.4
    base_offset: float = 2.0
    noise: float = 0.5
    bias_floor: Optional[float] = None


def make_biased_dataset(spec: BiasSpec = BiasSpec(), seed: int = 7) -> Dataset:
    if spec.n_features < 2 or spec.n_samples < 2:
        raise ValueError("need at least one nonsensitive feature and two samples")
    if not 0 < spec.p_sensitive < 1 or not 0 <= spec.bias_rate <= 1:
        raise ValueError("p_sensitive must lie in (0, 1) and bias_rate in [0, 1]")
    if spec.bias_floor and spec.separation == 0 and spec.bias_rate == 0:
        raise ValueError(
            f"zero separation and zero bias cannot produce |SPD| >= {spec.bias_floor}")
    rng = np.random.default_rng(seed)
    N, d = spec.n_samples, spec.n_features - 1
    s = (rng.random(N) < spec.p_sensitive).astype(np.int64)
    X = rng.standard_normal((N, d))
    X[:, 0] += spec.separation * s
    w = np.linspace(1.5, 0.3, d)
    score = X @ w + spec.base_offset + spec.noise * rng.logistic(size=N)
    y = np.where(score > 0, 1, -1)
    flip = (s == 0) & (y == 1) & (rng.random(N) < spec.bias_rate)
    y[flip] = -1
    return Dataset(X, s, y, tuple(f"f{j + 1}" for j in range(d)), "group", "outcome")


@dataclass(frozen=True)
class CommunicationCost:
    """Scalars sent in one round of the two-stage scheme vs. iterative FL.

    Each synthetic point carries n + 1 scalars (features, sensitive value,
    label); the model has n parameters.
    """

    clients: int
    n: int
    dataset_sizes: tuple
    rounds: int

    @property
    def uplink(self) -> int:
        return sum(m * (self.n + 1) for m in self.dataset_sizes)

    @property
    def downlink(self) -> int:
        return self.clients * self.n

    @property
    def iterative_fl(self) -> int:
        return self.clients * self.rounds * self.n

    def as_dict(self):
        return {"uplink": self.uplink, "downlink": self.downlink,
                "iterative_fl": self.iterative_fl, "rounds": self.rounds}


def resolve_size(setting, N: int) -> int:
    """Per-client synthetic size: an int is absolute, a float in (0, 1] is floor(f * N)."""
    if isinstance(setting, bool):
        raise TypeError("size setting must be int or float")
    if isinstance(setting, int):
        if not 1 <= setting:
            raise ValueError("absolute size must be >= 1")
        return min(setting, N)
    if not 0 < setting <= 1:
        raise ValueError("fractional size must lie in (0, 1]")
    return max(1, math.floor(setting * N + 1e-9))


def size_label(setting) -> str:
    if isinstance(setting, int) and not isinstance(setting, bool):
        return f"n{setting}"
    return f"{round(100 * setting, 6):g}%"


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: Optional[str] = None
    schema: Optional[ColumnSchema] = None
    bias: BiasSpec = BiasSpec()
    data_seed: int = 7
    clients: int = 2
    seed: int = 0
    train_fraction: float = 0.8
    intercept: bool = False
    rhos: tuple = (0.0, 10.0, 100.0, 1000.0, 10000.0)
    mode: Mode = Mode.SP
    lambda_xhat: float = 1e-4
    lambda_theta: float = 1e-4
    ns1: object = 1.0
    strict_sum: bool = False
    adam: AdamConfig = AdamConfig()
    inner: InnerSolveConfig = InnerSolveConfig()
    dp: DpConfig = DpConfig()
    ns2: tuple = (1.0, 0.1)
    stage2: bool = True
    rounds: int = 100
    workers: Optional[int] = None
    output_dir: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "rhos", tuple(float(r) for r in self.rhos))
        object.__setattr__(self, "ns2", tuple(self.ns2))
        if not self.rhos:
            raise ValueError("rho_o list must be nonempty")
        if self.clients < 1:
            raise ValueError("need at least one client")

    def to_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "mode":
                v = v.value
            elif hasattr(v, "__dataclass_fields__"):
                v = asdict(v)
            d[f.name] = v
        return d

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("workers")
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def derive_seed(seed: int, *path) -> int:
    """64-bit child seed for a named purpose (e.g. ``("client", 1, "split")``)."""
    words = [seed] + [int(hashlib.sha256(str(p).encode()).hexdigest()[:8], 16) for p in path]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def fit_model(ds: Dataset, inner: InnerSolveConfig, theta0=None):
    """Server training: regularized logistic regression solved by L-BFGS."""
    loss = RegularizedLoss(ds, inner.lambda_theta)
    start = np.zeros(ds.n) if theta0 is None else theta0
    return lbfgs_minimize(loss.value_and_gradient, start, inner)


def load_source(cfg: ExperimentConfig) -> Dataset:
    if cfg.data_path:
        if cfg.schema is None:
            raise ValueError("a data file needs a column schema")
        return load_dataset(cfg.data_path, cfg.schema)
    return make_biased_dataset(cfg.bias, cfg.data_seed)


def prepare_client(c: int, part: Dataset, cfg: ExperimentConfig):
    """Split, then standardize with statistics of the client's own training set."""
    train, test = train_test_split(part, cfg.train_fraction, derive_seed(cfg.seed, "client", c, "split"))
    train, tr = standardize(train)
    test = tr.apply(test)
    if cfg.intercept:
        train, test = add_intercept(train), add_intercept(test)
    return train, test


def _client_task(c: int, part: Dataset, cfg: ExperimentConfig):
    """Everything one client does. Sees only its own partition."""
    train, test = prepare_client(c, part, cfg)
    inner = cfg.inner.with_(lambda_theta=cfg.lambda_theta)
    N = len(train)
    out = {"client": c, "train_size": N, "test": test, "cells": {}}
    for rho in cfg.rhos:
        cell = {"syn1": None, "trace": None, "syn2": {}, "ledgers": {}, "error": None}
        try:
            pcfg = PenaltyConfig(rho_o=rho, lambda_xhat=cfg.lambda_xhat, lambda_theta=cfg.lambda_theta,
                                 mode=cfg.mode, ns1=resolve_size(cfg.ns1, N),
                                 seed=derive_seed(cfg.seed, "client", c, "init", rho),
                                 strict_sum=cfg.strict_sum)
            syn1, trace = learn_stage1(train, pcfg, cfg.adam, inner, client=c)
            cell["syn1"], cell["trace"] = syn1, trace
            if cfg.stage2:
                for setting in cfg.ns2:
                    dcfg = DpConfig(epsilon=cfg.dp.epsilon, delta=cfg.dp.delta,
                                    ns2=resolve_size(setting, N), clip_bound=cfg.dp.clip_bound,
                                    budget_split=cfg.dp.budget_split,
                                    seed=derive_seed(cfg.seed, "client", c, "dp", rho, size_label(setting)))
                    syn2, ledger = generate_dp(syn1, dcfg)
                    cell["syn2"][size_label(setting)] = syn2
                    cell["ledgers"][size_label(setting)] = ledger
        except Exception as exc:  # recorded per cell, the sweep goes on
            log.warning("client %d, rho %g failed: %s", c, rho, exc)
            cell["error"] = f"{type(exc).__name__}: {exc}"
        out["cells"][rho] = cell
    return out


@dataclass
class ReportRow:
    rho: float
    stage: str  # baseline | syn1 | syn2
    size: str
    accuracy: float  # percent
    abs_spd: float
    abs_eod: float
    spd: float
    eod: float
    cov_sp: float
    cov_eo: float
    points: int
    uplink: int
    downlink: int
    iterative_fl: int
    inner_failures: int = 0
    status: str = "ok"


@dataclass
class RunReport:
    rows: list
    mode: str
    provenance: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)  # (client, rho) -> Stage1Trace
    ledgers: dict = field(default_factory=dict)  # (client, rho, size) -> PrivacyLedger
    server_models: dict = field(default_factory=dict)  # (rho, stage, size) -> theta

    def to_dict(self):
        return {
            "mode": self.mode,
            "provenance": self.provenance,
            "rows": [asdict(r) for r in self.rows],
            "ledgers": [{"client": c, "rho": rho, "size": size, **l.to_dict()}
                        for (c, rho, size), l in sorted(self.ledgers.items())],
        }

    @classmethod
    def from_dict(cls, d):
        ledgers = {(e["client"], e["rho"], e["size"]): PrivacyLedger.from_dict(e)
                   for e in d.get("ledgers", [])}
        rows = [ReportRow(**{k: (math.nan if v is None else v) for k, v in r.items()}) for r in d["rows"]]
        return cls(rows, d["mode"], d.get("provenance", {}), ledgers=ledgers)

    def cell(self, rho, stage="syn1", size=None):
        for r in self.rows:
            if r.rho == rho and (r.stage == stage or (stage == "syn1" and r.stage == "baseline")) \
                    and (size is None or r.size == size):
                return r
        raise KeyError((rho, stage, size))


def _failed_row(rho, stage, size, msg):
    nan = math.nan
    return ReportRow(rho, stage, size, nan, nan, nan, nan, nan, nan, nan, 0, 0, 0, 0, 0, msg)


def _server_row(rho, stage, size, syns, pooled_test, cfg, report, traces_failures=0):
    for c, syn in enumerate(syns):
        if syn.client != c:
            raise RuntimeError(f"dataset from client {syn.client} arrived in slot {c}")
    data = concat([s.data for s in syns])
    inner = cfg.inner.with_(lambda_theta=cfg.lambda_theta)
    theta, rec = fit_model(data, inner)
    report.server_models[(rho, stage, size)] = theta
    ev = evaluate(pooled_test, theta)
    cost = CommunicationCost(len(syns), data.n, tuple(len(s) for s in syns), cfg.rounds)
    return ReportRow(
        rho=rho, stage=stage, size=size, accuracy=100.0 * ev.accuracy,
        abs_spd=abs(ev.spd), abs_eod=abs(ev.eod), spd=ev.spd, eod=ev.eod,
        cov_sp=ev.covariance_sp, cov_eo=ev.covariance_eo, points=len(data),
        uplink=cost.uplink, downlink=cost.downlink, iterative_fl=cost.iterative_fl,
        inner_failures=traces_failures + (0 if rec.converged else 1),
        status="ok" if rec.converged else f"server solve: {rec.message}",
    )


def run_clients(cfg: ExperimentConfig, parts):
    workers = min(cfg.workers or len(parts), len(parts))
    if workers <= 1:
        return [_client_task(c, p, cfg) for c, p in enumerate(parts)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_client_task, c, p, cfg) for c, p in enumerate(parts)]
        # collected in client order, whatever order they finish in
        return [f.result() for f in futures]


def run_pipeline(cfg: ExperimentConfig) -> RunReport:
    ds = load_source(cfg)
    parts = partition_clients(ds, cfg.clients, derive_seed(cfg.seed, "partition"))
    results = run_clients(cfg, parts)
    pooled_test = concat([r["test"] for r in results])

    report = RunReport(rows=[], mode=cfg.mode.value, provenance={
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "data_seed": cfg.data_seed,
        "data_source": cfg.data_path or "biased-generator",
        "clients": cfg.clients,
        "client_train_sizes": [r["train_size"] for r in results],
        "client_test_sizes": [len(r["test"]) for r in results],
        "config": cfg.to_dict(),
    })
    for rho in cfg.rhos:
        cells = [r["cells"][rho] for r in results]
        for r in results:
            if r["cells"][rho]["trace"] is not None:
                report.traces[(r["client"], rho)] = r["cells"][rho]["trace"]
            for size, ledger in r["cells"][rho]["ledgers"].items():
                report.ledgers[(r["client"], rho, size)] = ledger
        stage = "baseline" if rho == 0 else "syn1"
        errors = [c["error"] for c in cells if c["error"]]
        if errors:
            report.rows.append(_failed_row(rho, stage, size_label(cfg.ns1), "; ".join(errors)))
            for setting in (cfg.ns2 if cfg.stage2 else ()):
                report.rows.append(_failed_row(rho, "syn2", size_label(setting), "; ".join(errors)))
            continue
        fails = sum(c["trace"].inner_failures for c in cells)
        for row_args in [(stage, size_label(cfg.ns1), [c["syn1"] for c in cells])] + [
                ("syn2", size_label(s), [c["syn2"][size_label(s)] for c in cells])
                for s in (cfg.ns2 if cfg.stage2 else ())]:
            try:
                report.rows.append(_server_row(rho, *row_args, pooled_test, cfg, report, fails))
            except Exception as exc:
                log.warning("server cell rho=%g %s failed: %s", rho, row_args[0], exc)
                report.rows.append(_failed_row(rho, row_args[0], row_args[1], f"{type(exc).__name__}: {exc}"))
    return report


def _fmt(v):
    if isinstance(v, float):
        return "undefined" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def emit_report(report: RunReport, out_dir) -> list:
    """Write the table CSV, per-metric trend CSVs, rows, traces and a manifest.

    Returns the list of written paths.
    """
    if not report.rows:
        raise ValueError("empty report")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    rhos = sorted({r.rho for r in report.rows})
    groups = []
    for r in report.rows:
        key = ("syn1" if r.stage in ("baseline", "syn1") else "syn2", r.size)
        if key not in groups:
            groups.append(key)
    metrics = {"sp": ["abs_spd"], "eo": ["abs_eod"]}.get(report.mode, ["abs_spd", "abs_eod"])

    def lookup(rho, key):
        for r in report.rows:
            if r.rho == rho and ("syn1" if r.stage in ("baseline", "syn1") else "syn2", r.size) == key:
                return r
        return None

    header = ["rho_o"]
    for stage, size in groups:
        header += [f"{stage}_{size}_accuracy"] + [f"{stage}_{size}_{m}" for m in metrics]
    table = []
    for rho in rhos:
        line = [rho]
        for key in groups:
            r = lookup(rho, key)
            line += [math.nan] * (1 + len(metrics)) if r is None else \
                [r.accuracy] + [getattr(r, m) for m in metrics]
        table.append(line)
    path = os.path.join(out_dir, "table.csv")
    _write_csv(path, header, table)
    written.append(path)

    base_rho = 0.0 if 0.0 in rhos else None
    for metric in ("accuracy", "cov_sp", "cov_eo", "abs_spd", "abs_eod"):
        cols = ["rho_o", "baseline"] + [f"{s}_{z}" for s, z in groups]
        base = lookup(base_rho, groups[0]) if base_rho is not None else None
        lines = []
        for rho in rhos:
            line = [rho, getattr(base, metric) if base else math.nan]
            for key in groups:
                r = lookup(rho, key)
                line.append(getattr(r, metric) if r else math.nan)
            lines.append(line)
        path = os.path.join(out_dir, f"trend_{metric}.csv")
        _write_csv(path, cols, lines)
        written.append(path)

    path = os.path.join(out_dir, "rows.csv")
    names = [f.name for f in fields(ReportRow)]
    _write_csv(path, names, [[getattr(r, n) for n in names] for r in report.rows])
    written.append(path)

    if report.traces:
        tdir = os.path.join(out_dir, "traces")
        os.makedirs(tdir, exist_ok=True)
        for (c, rho), tr in sorted(report.traces.items()):
            path = os.path.join(tdir, f"client{c}_rho{rho:g}.csv")
            tr.to_csv(path)
            written.append(path)

    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    written.append(path)

    manifest = {
        "provenance": report.provenance,
        "mode": report.mode,
        "files": sorted(os.path.relpath(p, out_dir) for p in written),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    written.append(path)
    return written


def _json_default(o):
    if isinstance(o, float) and math.isnan(o):
        return None
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)
