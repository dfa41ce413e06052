"""Datasets, CSV ingestion, standardization, client partitioning and
stratified (s, y) assignment for synthetic data."""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

# Stratum order used everywhere: (0,-1) < (0,+1) < (1,-1) < (1,+1).
STRATA = ((0, -1), (0, 1), (1, -1), (1, 1))

DEFAULT_LABEL_MAP = {"0": -1, "1": 1, "-1": -1, "+1": 1, "0.0": -1, "1.0": 1, "-1.0": -1}
DEFAULT_SENSITIVE_MAP = {"0": 0, "1": 1, "0.0": 0, "1.0": 1}


class DataError(ValueError):
    pass


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled points ``(x, s, y)``.

    ``X`` holds the nonsensitive features (N x (n-1)), ``s`` the binary
    sensitive attribute and ``y`` the +/-1 label. Arrays are read-only.
    """

    X: np.ndarray
    s: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()
    sensitive_name: str = "s"
    label_name: str = "y"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        s = np.asarray(self.s)
        y = np.asarray(self.y)
        if X.shape[0] == 0:
            raise DataError("dataset has zero rows")
        if s.shape != (X.shape[0],) or y.shape != (X.shape[0],):
            raise DataError("X, s and y disagree on the number of rows")
        if not np.all((s == 0) | (s == 1)):
            raise DataError("sensitive values must be 0 or 1")
        if not np.all((y == -1) | (y == 1)):
            raise DataError("labels must be -1 or +1")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match X")
        object.__setattr__(self, "X", _frozen(X, float))
        object.__setattr__(self, "s", _frozen(s, np.int64))
        object.__setattr__(self, "y", _frozen(y, np.int64))
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.X.shape[0]

    def __reduce__(self):
        return (Dataset, (self.X, self.s, self.y, self.feature_names, self.sensitive_name, self.label_name))

    @property
    def n(self):
        """Length of the full feature vector a = (x, s)."""
        return self.X.shape[1] + 1

    @property
    def A(self):
        return np.column_stack([self.X, self.s.astype(float)])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return self.replace(X=self.X[idx], s=self.s[idx], y=self.y[idx])

    def replace(self, **changes) -> "Dataset":
        kw = dict(X=self.X, s=self.s, y=self.y, feature_names=self.feature_names,
                  sensitive_name=self.sensitive_name, label_name=self.label_name)
        kw.update(changes)
        return Dataset(**kw)

    def stratum_counts(self) -> np.ndarray:
        return np.array([np.sum((self.s == sv) & (self.y == yv)) for sv, yv in STRATA])


def concat(datasets: Sequence[Dataset]) -> Dataset:
    first = datasets[0]
    return first.replace(
        X=np.vstack([d.X for d in datasets]),
        s=np.concatenate([d.s for d in datasets]),
        y=np.concatenate([d.y for d in datasets]),
    )


@dataclass(frozen=True)
class ColumnSchema:
    """Column roles for :func:`load_dataset`.

    ``features=None`` means every column that is neither sensitive, label
    nor listed in ``drop``.
    """

    sensitive: str
    label: str
    features: tuple | None = None
    drop: tuple = ()
    sensitive_map: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_SENSITIVE_MAP))
    label_map: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_LABEL_MAP))


def load_dataset(path, schema: ColumnSchema) -> Dataset:
    """Read a comma-separated file with a header row, in file order."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError("empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError("dataset has zero rows")
    for col in (schema.sensitive, schema.label):
        if col not in header:
            raise DataError(f"column {col!r} not in header")
    if schema.features is None:
        skip = {schema.sensitive, schema.label, *schema.drop}
        features = [h for h in header if h not in skip]
    else:
        features = list(schema.features)
        missing = [f for f in features if f not in header]
        if missing:
            raise DataError(f"feature columns not in header: {missing}")
    fidx = [header.index(f) for f in features]
    sidx, lidx = header.index(schema.sensitive), header.index(schema.label)

    X = np.empty((len(body), len(features)))
    s = np.empty(len(body), dtype=np.int64)
    y = np.empty(len(body), dtype=np.int64)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"ragged row {i + 2}: {len(row)} fields, expected {len(header)}")
        for j, c in enumerate(fidx):
            try:
                X[i, j] = float(row[c])
            except ValueError:
                raise DataError(
                    f"non-numeric feature {features[j]!r} at row {i + 2}: {row[c]!r}") from None
            if not math.isfinite(X[i, j]):
                raise DataError(f"non-numeric feature {features[j]!r} at row {i + 2}: {row[c]!r}")
        sv, lv = row[sidx].strip(), row[lidx].strip()
        if sv not in schema.sensitive_map:
            raise DataError(f"unmapped sensitive value {sv!r} at row {i + 2}")
        if lv not in schema.label_map:
            raise DataError(f"unmapped label value {lv!r} at row {i + 2}")
        s[i] = schema.sensitive_map[sv]
        y[i] = schema.label_map[lv]
    return Dataset(X, s, y, tuple(features), schema.sensitive, schema.label)


def write_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` as CSV; labels as -1/1, sensitive as 0/1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, ds.sensitive_name, ds.label_name])
        for x, sv, yv in zip(ds.X, ds.s, ds.y):
            w.writerow([repr(float(v)) for v in x] + [int(sv), int(yv)])


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature affine map ``(x - mean) / scale``.

    Uses the population standard deviation (ddof=0). Constant columns get
    scale 1, so they map to 0.
    """

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray
    ddof: int = 0

    def apply(self, ds: Dataset) -> Dataset:
        if ds.X.shape[1] != self.mean.shape[0]:
            raise DataError("feature count does not match the fitted transform")
        return ds.replace(X=(ds.X - self.mean) / self.scale)


def standardize(ds: Dataset) -> tuple[Dataset, Standardizer]:
    mean = ds.X.mean(axis=0)
    sd = ds.X.std(axis=0)
    # near-constant relative to magnitude counts as constant
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, sd)
    tr = Standardizer(_frozen(mean, float), _frozen(scale, float), _frozen(constant, bool))
    return tr.apply(ds), tr


def add_intercept(ds: Dataset, name: str = "intercept") -> Dataset:
    """Append a constant-1 feature column (call after standardization)."""
    return ds.replace(X=np.column_stack([ds.X, np.ones(len(ds))]),
                      feature_names=(*ds.feature_names, name))


def partition_clients(ds: Dataset, k: int, seed: int) -> list[Dataset]:
    """Seeded shuffle, then split into ``k`` parts whose sizes differ by at most one."""
    if k < 1:
        raise ValueError("client count must be >= 1")
    if k > len(ds):
        raise ValueError(f"cannot split {len(ds)} points across {k} clients")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return [ds.subset(part) for part in np.array_split(perm, k)]


def train_test_split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = math.floor(train_fraction * len(ds) + 0.5)
    if n_train == 0 or n_train == len(ds):
        raise ValueError(f"split of {len(ds)} points at {train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(perm[:n_train]), ds.subset(perm[n_train:])


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Ties in the fractional parts go to the lower index.
    """
    w = np.asarray(weights, dtype=float)
    quotas = total * w / w.sum()
    counts = np.floor(quotas).astype(np.int64)
    rem = quotas - counts
    short = total - int(counts.sum())
    # stable sort on -rem keeps index order among equal remainders
    order = np.argsort(-rem, kind="stable")
    counts[order[:short]] += 1
    return counts


def assign_synthetic_pairs(ds: Dataset, target_size: int) -> np.ndarray:
    """Choose the (s, y) pairs of a synthetic dataset of ``target_size`` points.

    Returns an integer array of shape (target_size, 2). With
    ``target_size == len(ds)`` the pairs of ``ds`` are returned unchanged;
    otherwise stratum counts follow ``ds`` by largest remainder and the
    output is grouped by stratum.
    """
    N = len(ds)
    if not 1 <= target_size <= N:
        raise ValueError(f"target_size must be in [1, {N}]")
    if target_size == N:
        return np.column_stack([ds.s, ds.y])
    counts = ds.stratum_counts()
    if target_size < np.count_nonzero(counts):
        warnings.warn(
            f"target size {target_size} is smaller than the number of nonempty strata; "
            "some strata will be dropped", stacklevel=2)
    alloc = largest_remainder(counts, target_size)
    return np.array([pair for pair, c in zip(STRATA, alloc) for _ in range(c)], dtype=np.int64)
