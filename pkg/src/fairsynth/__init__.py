"""Fair and private synthetic data for one-shot collaborative learning.

Each client learns a synthetic dataset on which a logistic model comes out
fair (stage 1), re-synthesizes it under differential privacy (stage 2) and
uploads it once; the server trains on the union.
"""

from .data import (ColumnSchema, DataError, Dataset, Standardizer, add_intercept, concat,
                   load_dataset, partition_clients, standardize, train_test_split, write_dataset)
from .fairness import FairnessReport, accuracy, covariance_eo, covariance_sp, eod, evaluate, spd
from .harness import (BiasSpec, CommunicationCost, ExperimentConfig, RunReport, emit_report,
                      make_biased_dataset, run_pipeline)
from .model import RegularizedLoss, logistic_loss, predict, regularized_loss
from .optim import AdamConfig, InnerSolveConfig, LbfgsResult, adam_step, lbfgs_minimize
from .stage1 import (Mode, PenaltyConfig, SyntheticDataset, hypergradient, learn_stage1,
                     penalty_objective)
from .stage2 import (BudgetError, DpConfig, PrivacyLedger, gaussian_noise_scale, generate_dp,
                     ledger_verify)

__version__ = "0.1.0"
