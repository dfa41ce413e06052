"""
Two clients, one upload each
============================

Run the full sweep: each client splits, standardizes and learns fair
synthetic data for every penalty weight, re-synthesizes it privately and
sends it once. The server trains on the union and is scored on the pooled
client test sets. Results land in a run directory with a manifest.
"""

import sys
import tempfile

from fairsynth import AdamConfig, CommunicationCost, ExperimentConfig, emit_report, run_pipeline

cfg = ExperimentConfig(intercept=True, rhos=(0.0, 10.0, 1000.0), ns2=(1.0, 0.1),
                       adam=AdamConfig(k_max=500))
report = run_pipeline(cfg)

print(f"{'rho_o':>7} {'stage':>8} {'size':>5} {'acc %':>6} {'|SPD|':>7} {'uplink':>7}")
for r in report.rows:
    print(f"{r.rho:7g} {r.stage:>8} {r.size:>5} {r.accuracy:6.2f} {r.abs_spd:7.4f} {r.uplink:7d}")

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="fairsynth-")
for path in emit_report(report, out):
    print("wrote", path)

# One upload per client against t rounds of model exchange.
cost = CommunicationCost(clients=2, n=11, dataset_sizes=(831, 831), rounds=100)
print("uplink", cost.uplink, "downlink", cost.downlink, "iterative FL", cost.iterative_fl)
