"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

Criterion 5 needs the Law School file; point FAIRSYNTH_LAW_SCHOOL at it
(column names via FAIRSYNTH_LAW_SENSITIVE / FAIRSYNTH_LAW_LABEL, defaults
"race" and "pass_bar"). Without it that criterion is skipped.
"""

import filecmp
import math
import os
import time

import numpy as np
import pytest

from fairsynth.data import STRATA, ColumnSchema, concat, partition_clients
from fairsynth.fairness import evaluate
from fairsynth.harness import (CommunicationCost, ExperimentConfig, derive_seed, emit_report,
                               fit_model, load_source, prepare_client, resolve_size, run_pipeline)
from fairsynth.model import RegularizedLoss
from fairsynth.optim import AdamConfig, InnerSolveConfig, lbfgs_minimize
from fairsynth.stage1 import PenaltyConfig, hypergradient, learn_stage1, penalty_objective
from fairsynth.stage2 import DpConfig, gaussian_noise_scale, generate_dp, ledger_verify, release_moments

from conftest import ACCEPTANCE, random_dataset
from oracles import damped_newton, fd_hypergradient, random_instance, relative_error

DESK = dict(intercept=True, rhos=(0.0, 1000.0), ns2=(1.0, 0.1))


def record(k, ok, detail):
    ACCEPTANCE[k] = ("PASS" if ok else "FAIL", detail)
    assert ok, detail


@pytest.fixture(scope="module")
def desk_runs():
    out = {}
    for mode in ("sp", "eo"):
        t = time.perf_counter()
        out[mode] = run_pipeline(ExperimentConfig(mode=mode, **DESK))
        out[mode + "_seconds"] = time.perf_counter() - t
    return out


def test_criterion_1_hypergradient_matches_finite_differences():
    inner = InnerSolveConfig(gradient_tolerance=1e-13, step_tolerance=1e-14, max_iterations=1000)
    rng = np.random.default_rng(2024)
    modes = ("sp", "eo", "sp+eo")
    t = time.perf_counter()
    worst = 0.0
    for k in range(20):
        real, syn, cfg = random_instance(rng, modes=(modes[k % 3],))
        assert len(real) <= 30 and real.n <= 4 and len(syn) <= 15
        _, comps = penalty_objective(real, syn, cfg, inner)
        g = hypergradient(real, syn, cfg, inner, theta=comps.theta)
        worst = max(worst, float(relative_error(g, fd_hypergradient(real, syn, cfg, inner)).max()))
    secs = time.perf_counter() - t
    record(1, worst <= 1e-4 and secs < 30, f"max rel err {worst:.2e} (<= 1e-4), {secs:.1f}s (< 30s)")


def test_criterion_2_lbfgs_matches_damped_newton():
    rng = np.random.default_rng(7)
    worst_theta = worst_grad = 0.0
    for _ in range(10):
        ds = random_dataset(rng, int(rng.integers(10, 40)), int(rng.integers(2, 6)))
        theta, res = lbfgs_minimize(RegularizedLoss(ds, 1e-4).value_and_gradient, np.zeros(ds.n))
        worst_theta = max(worst_theta, float(np.abs(theta - damped_newton(ds, 1e-4)).max()))
        worst_grad = max(worst_grad, res.grad_norm)
    record(2, worst_theta <= 1e-6 and worst_grad <= 1e-8,
           f"max |dtheta| {worst_theta:.2e} (<= 1e-6), max grad norm {worst_grad:.2e} (<= 1e-8)")


def test_criterion_3_baseline_identity():
    cfg = ExperimentConfig(rhos=(0.0,), stage2=False)
    parts = partition_clients(load_source(cfg), cfg.clients, derive_seed(cfg.seed, "partition"))
    trains, tests = zip(*(prepare_client(c, p, cfg) for c, p in enumerate(parts)))
    same = True
    for c, tr in enumerate(trains):
        syn, trace = learn_stage1(tr, PenaltyConfig(rho_o=0.0), client=c)
        same &= syn.xhat.tobytes() == tr.X.tobytes() and len(trace) == 0
    theta, _ = fit_model(concat(list(trains)), cfg.inner)
    plain = evaluate(concat(list(tests)), theta)
    row = run_pipeline(cfg).cell(0.0, "baseline")
    metrics_equal = (row.accuracy == 100.0 * plain.accuracy and row.spd == plain.spd
                     and row.eod == plain.eod and row.cov_sp == plain.covariance_sp)
    record(3, same and metrics_equal,
           f"stage-1 output bitwise equal: {same}; pipeline metrics equal plain model: {metrics_equal}")


def test_criterion_4_desk_scale_trend(desk_runs):
    lines, ok = [], True
    for mode, metric in (("sp", "abs_spd"), ("eo", "abs_eod")):
        rep = desk_runs[mode]
        base, fair = rep.cell(0.0, "baseline"), rep.cell(1000.0, "syn1")
        ratio = getattr(fair, metric) / getattr(base, metric)
        drop = base.accuracy - fair.accuracy
        ok &= ratio <= 0.3 and drop <= 5.0
        lines.append(f"{mode}: |{metric[4:].upper()}| {getattr(base, metric):.4f} -> "
                     f"{getattr(fair, metric):.4f} (ratio {ratio:.3f} <= 0.3), "
                     f"acc {base.accuracy:.2f} -> {fair.accuracy:.2f} (drop {drop:.2f} <= 5)")
    secs = desk_runs["sp_seconds"] + desk_runs["eo_seconds"]
    ok &= secs < 600
    record(4, ok, "; ".join(lines) + f"; {secs:.1f}s (< 600s)")


@pytest.mark.skipif(not os.environ.get("FAIRSYNTH_LAW_SCHOOL"), reason="Law School file not supplied")
def test_criterion_5_law_school_table():
    schema = ColumnSchema(os.environ.get("FAIRSYNTH_LAW_SENSITIVE", "race"),
                          os.environ.get("FAIRSYNTH_LAW_LABEL", "pass_bar"))
    cfg = ExperimentConfig(data_path=os.environ["FAIRSYNTH_LAW_SCHOOL"], schema=schema,
                           rhos=(0.0, 10.0), ns2=(1.0, 0.1))
    rep = run_pipeline(cfg)
    base, r10 = rep.cell(0.0, "baseline"), rep.cell(10.0, "syn1")
    ok = (abs(base.accuracy - 88.49) <= 1.5 and abs(base.abs_spd - 0.4377) <= 0.05
          and abs(r10.accuracy - 87.98) <= 1.5 and abs(r10.abs_spd - 0.0903) <= 0.05)
    direction = all(r.abs_spd < base.abs_spd and abs(r.accuracy - base.accuracy) <= 2.0
                    for r in rep.rows if r.stage == "syn2")
    record(5, ok and direction,
           f"baseline {base.accuracy:.2f}% / {base.abs_spd:.4f}, rho 10 {r10.accuracy:.2f}% / "
           f"{r10.abs_spd:.4f}; stage-2 direction holds: {direction}")


def test_criterion_5_skip_note():
    if not os.environ.get("FAIRSYNTH_LAW_SCHOOL"):
        ACCEPTANCE[5] = ("SKIP", "set FAIRSYNTH_LAW_SCHOOL to the Law School CSV to run")


def test_criterion_6_dp_calibration(desk_runs):
    sigma = gaussian_noise_scale(1, 1, 1e-5)
    ledgers = [l for mode in ("sp", "eo") for l in desk_runs[mode].ledgers.values()]
    rng = np.random.default_rng(0)
    for seed in range(5):
        _, l = generate_dp(random_syn(rng), DpConfig(seed=seed))
        ledgers.append(l)
    verified = all(ledger_verify(l, DpConfig()) for l in ledgers)
    exact = all(l.total_epsilon == 3.0 and l.total_delta == 1e-5 for l in ledgers)
    record(6, abs(sigma - 4.8450) <= 1e-3 and verified and exact,
           f"sigma {sigma:.6f} (4.8450 +/- 1e-3); {len(ledgers)} ledgers verified: {verified}; "
           f"totals exactly (3, 1e-5): {exact}")


def random_syn(rng):
    from fairsynth.stage1 import SyntheticDataset
    return SyntheticDataset(random_dataset(rng, 200, 5), "stage1", client=0)


def test_criterion_7_zero_noise_release():
    rng = np.random.default_rng(11)
    ds = random_dataset(rng, 300, 5)
    X = 2.0 * ds.X
    cfg = DpConfig(clip_bound=3.0)
    releases, _ = release_moments(X, ds.s, ds.y, cfg, rng, zero_noise=True)
    Xc = np.clip(X, -3.0, 3.0)
    worst = 0.0
    for r, (sv, yv) in zip(releases, STRATA):
        rows = Xc[(ds.s == sv) & (ds.y == yv)]
        mean = rows.mean(axis=0)
        cov = rows.T @ rows / len(rows) - np.outer(mean, mean)
        worst = max(worst, np.abs(r.mean - mean).max(), np.abs(r.covariance - cov).max())
    record(7, worst <= 1e-12, f"max deviation from clipped statistics {worst:.1e} (<= 1e-12)")


def test_criterion_8_communication_accounting():
    ns2 = resolve_size(0.1, 8319)
    cost = CommunicationCost(clients=2, n=11, dataset_sizes=(ns2, ns2), rounds=100)
    ok = (ns2, cost.uplink, cost.downlink) == (831, 19944, 22)
    ok &= cost.uplink == 2 * 831 * 12 and cost.iterative_fl == 2 * 100 * 11
    record(8, ok, f"ns2 {ns2}, uplink {cost.uplink:,}, downlink {cost.downlink}, "
                  f"iterative FL {cost.iterative_fl:,}")


def test_criterion_9_byte_identical_reports(tmp_path):
    cfg = ExperimentConfig(intercept=True, rhos=(0.0, 100.0), ns2=(0.1,), adam=AdamConfig(k_max=200))
    emit_report(run_pipeline(cfg), tmp_path / "a")
    emit_report(run_pipeline(cfg), tmp_path / "b")
    names = sorted(os.path.relpath(os.path.join(d, f), tmp_path / "a")
                   for d, _, fs in os.walk(tmp_path / "a") for f in fs)
    same = all(filecmp.cmp(tmp_path / "a" / n, tmp_path / "b" / n, shallow=False) for n in names)
    record(9, same, f"{len(names)} files compared byte for byte")
