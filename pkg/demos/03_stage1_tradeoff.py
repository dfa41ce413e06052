"""
Trading accuracy for fairness on one client
===========================================

Learn synthetic features for increasing penalty weights, retrain the
model on each synthetic set and score it on held-out real data.
"""

import numpy as np

from fairsynth import AdamConfig, InnerSolveConfig, PenaltyConfig, evaluate, learn_stage1
from fairsynth import make_biased_dataset, train_test_split
from fairsynth.data import add_intercept, standardize
from fairsynth.stage1 import solve_inner

ds = make_biased_dataset(seed=7)
train, test = train_test_split(ds, 0.8, seed=1)
train, scaler = standardize(train)
train, test = add_intercept(train), add_intercept(scaler.apply(test))

print(f"{'rho_o':>7} {'accuracy':>9} {'|SPD|':>7} {'outer iters':>12}")
for rho in (0.0, 10.0, 100.0, 1000.0):
    syn, trace = learn_stage1(train, PenaltyConfig(rho_o=rho, mode="sp"), AdamConfig(k_max=500))
    theta, _ = solve_inner(syn.data, 1e-4, InnerSolveConfig())
    rep = evaluate(test, theta)
    print(f"{rho:7g} {rep.accuracy:9.4f} {abs(rep.spd):7.4f} {len(trace):12d}")

# rho_o = 0 started from the real features returns them untouched.
syn, _ = learn_stage1(train, PenaltyConfig(rho_o=0.0))
print("baseline copy is exact:", np.array_equal(syn.xhat, train.X))

# How far did the features move at the largest penalty?
syn, trace = learn_stage1(train, PenaltyConfig(rho_o=1000.0), AdamConfig(k_max=500))
shift = np.abs(syn.xhat - train.X).mean(axis=0)
print("mean absolute shift per feature:", np.round(shift, 3))
print("objective first/last:", round(trace.objective[0], 4), round(trace.objective[-1], 4))
