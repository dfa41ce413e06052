"""
Measuring group fairness of a logistic model
============================================

Generate a seeded dataset in which group s=1 is favored, fit the plain
regularized logistic model and look at the four fairness numbers.
"""

import numpy as np

from fairsynth import InnerSolveConfig, RegularizedLoss, evaluate, lbfgs_minimize, make_biased_dataset
from fairsynth.data import add_intercept, standardize

ds = make_biased_dataset(seed=7)
print("points:", len(ds), " features incl. s:", ds.n)
print("stratum counts (s,y) = (0,-1) (0,+1) (1,-1) (1,+1):", ds.stratum_counts())

# Standardize, then append a constant column so the model has an offset.
ds = add_intercept(standardize(ds)[0])

loss = RegularizedLoss(ds, lambda_theta=1e-4)
theta, record = lbfgs_minimize(loss.value_and_gradient, np.zeros(ds.n))
print("L-BFGS:", record.iterations, "iterations, gradient norm", f"{record.grad_norm:.1e}")

rep = evaluate(ds, theta)
print(f"accuracy  {rep.accuracy:.4f}")
print(f"SPD       {rep.spd:+.4f}   (positive-rate gap, s=1 minus s=0)")
print(f"EOD       {rep.eod:+.4f}   (true-positive-rate gap)")
print(f"cov SP    {rep.covariance_sp:+.4f}   (smooth surrogate used for training)")
print(f"cov EO    {rep.covariance_eo:+.4f}")
print("group counts:", rep.group_counts)
