"""TOML experiment configs and dotted-key overrides.

Layout (every key optional)::

    seed = 0
    clients = 2
    train_fraction = 0.8
    intercept = false
    rhos = [0, 10, 100, 1000, 10000]
    mode = "sp"              # sp | eo | sp+eo
    ns1 = 1.0                # float in (0, 1]: floor(f * N); int: absolute
    ns2 = [1.0, 0.1]         # same rule, per client training size N
    rounds = 100             # iterative-FL comparison figure
    output_dir = "runs/example"

    [data]                   # omit to use the biased generator
    path = "law.csv"
    sensitive = "race"
    label = "pass_bar"
    features = ["lsat", "ugpa"]   # default: all other columns
    drop = []
    sensitive_map = { White = 1, Black = 0 }
    label_map = { "1" = 1, "0" = -1 }

    [bias]                   # BiasSpec fields, plus
    seed = 7

    [penalty]
    lambda_xhat = 1e-4
    lambda_theta = 1e-4
    strict_sum = false

    [adam]                   # AdamConfig fields
    [inner]                  # InnerSolveConfig fields except lambda_theta
    [dp]                     # epsilon, delta, clip_bound, budget_split

The fractional rule for sizes is ``floor(f * N)`` with a minimum of 1; e.g.
0.1 of 8319 is 831.
"""

from __future__ import annotations

import copy
import json
from dataclasses import fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data import DEFAULT_LABEL_MAP, DEFAULT_SENSITIVE_MAP, ColumnSchema
from .harness import BiasSpec, ExperimentConfig
from .optim import AdamConfig, InnerSolveConfig
from .stage2 import DpConfig


class ConfigError(ValueError):
    pass


_TOP = {"seed", "clients", "train_fraction", "intercept", "rhos", "mode", "ns1", "ns2",
        "rounds", "output_dir", "workers", "stage2"}
_SECTIONS = {"data", "bias", "penalty", "adam", "inner", "dp"}


def load_config_dict(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_value(text: str):
    """Parse an override value as TOML, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def set_dotted(d: dict, key: str, value) -> dict:
    """Return a copy of ``d`` with ``key`` (e.g. ``"adam.k_max"``) set."""
    out = copy.deepcopy(d)
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key}: {p} is not a table")
    node[parts[-1]] = value
    return out


def _pick(cls, table: dict, section: str, exclude=()):
    names = {f.name for f in fields(cls)} - set(exclude)
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return {k: (tuple(v) if isinstance(v, list) else v) for k, v in table.items()}


def _size(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"size setting must be a number, got {v!r}")
    return v


def build_config(d: dict) -> ExperimentConfig:
    unknown = set(d) - _TOP - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for k in _TOP & set(d):
        kw[k] = d[k]
    if "rhos" in kw:
        kw["rhos"] = tuple(kw["rhos"]) if isinstance(kw["rhos"], list) else (kw["rhos"],)
    if "ns2" in kw:
        vals = kw["ns2"] if isinstance(kw["ns2"], list) else [kw["ns2"]]
        kw["ns2"] = tuple(_size(v) for v in vals)
    if "ns1" in kw:
        kw["ns1"] = _size(kw["ns1"])

    data = dict(d.get("data", {}))
    if data:
        if "path" not in data or "sensitive" not in data or "label" not in data:
            raise ConfigError("[data] needs path, sensitive and label")
        kw["data_path"] = data.pop("path")
        smap = {str(k): int(v) for k, v in data.pop("sensitive_map", DEFAULT_SENSITIVE_MAP).items()}
        lmap = {str(k): int(v) for k, v in data.pop("label_map", DEFAULT_LABEL_MAP).items()}
        feats = data.pop("features", None)
        kw["schema"] = ColumnSchema(
            sensitive=data.pop("sensitive"), label=data.pop("label"),
            features=tuple(feats) if feats is not None else None,
            drop=tuple(data.pop("drop", ())), sensitive_map=smap, label_map=lmap)
        if data:
            raise ConfigError(f"unknown keys in [data]: {sorted(data)}")

    bias = dict(d.get("bias", {}))
    if "seed" in bias:
        kw["data_seed"] = bias.pop("seed")
    if bias:
        kw["bias"] = BiasSpec(**_pick(BiasSpec, bias, "bias"))

    pen = d.get("penalty", {})
    bad = set(pen) - {"lambda_xhat", "lambda_theta", "strict_sum"}
    if bad:
        raise ConfigError(f"unknown keys in [penalty]: {sorted(bad)}")
    kw.update(pen)
    if "adam" in d:
        kw["adam"] = AdamConfig(**_pick(AdamConfig, d["adam"], "adam"))
    if "inner" in d:
        kw["inner"] = InnerSolveConfig(**_pick(InnerSolveConfig, d["inner"], "inner", exclude=("lambda_theta",)))
    if "dp" in d:
        kw["dp"] = DpConfig(**_pick(DpConfig, d["dp"], "dp", exclude=("ns2", "seed", "fixed_columns")))
    try:
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read ``path`` (or start from defaults) and apply ``(key, value)`` overrides."""
    d = load_config_dict(path) if path else {}
    for key, value in overrides:
        d = set_dotted(d, key, value)
    return build_config(d)


def config_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True, default=str)
