"""Command-line entry point: ``fairsynth <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import ConfigError, config_json, load_config, parse_value
from .data import ColumnSchema, DataError, load_dataset, standardize, write_dataset
from .fairness import evaluate
from .harness import (BiasSpec, RunReport, emit_report, fit_model, make_biased_dataset,
                      resolve_size, run_pipeline)
from .optim import AdamConfig, InnerSolveConfig
from .stage1 import Mode, PenaltyConfig, SyntheticDataset, learn_stage1
from .stage2 import BudgetError, DpConfig, generate_dp

# flag name -> dotted config key
_RUN_FLAGS = {
    "seed": "seed", "clients": "clients", "rhos": "rhos", "mode": "mode",
    "k_max": "adam.k_max", "step_size": "adam.step_size", "epsilon": "dp.epsilon",
    "delta": "dp.delta", "ns2": "ns2", "ns1": "ns1", "workers": "workers",
    "train_fraction": "train_fraction", "data": "data.path", "sensitive": "data.sensitive",
    "label": "data.label",
}


def _schema_args(p):
    p.add_argument("--sensitive", default="s", help="sensitive column name")
    p.add_argument("--label", default="y", help="label column name")
    p.add_argument("--features", help="comma-separated feature columns (default: the rest)")
    p.add_argument("--drop", default="", help="comma-separated columns to ignore")
    p.add_argument("--sensitive-map", help='JSON object, e.g. \'{"White": 1, "Black": 0}\'')
    p.add_argument("--label-map", help='JSON object, e.g. \'{"yes": 1, "no": -1}\'')


def _schema(args) -> ColumnSchema:
    kw = dict(sensitive=args.sensitive, label=args.label,
              features=tuple(args.features.split(",")) if args.features else None,
              drop=tuple(c for c in args.drop.split(",") if c))
    if args.sensitive_map:
        kw["sensitive_map"] = {str(k): int(v) for k, v in json.loads(args.sensitive_map).items()}
    if args.label_map:
        kw["label_map"] = {str(k): int(v) for k, v in json.loads(args.label_map).items()}
    return ColumnSchema(**kw)


def _size_arg(text):
    v = parse_value(text)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise argparse.ArgumentTypeError(f"not a size: {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsynth", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline over a rho_o sweep")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", help="run directory (overrides output_dir)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. adam.k_max=200")
    p.add_argument("--seed", type=int)
    p.add_argument("--clients", type=int)
    p.add_argument("--rhos", type=lambda t: [float(v) for v in t.split(",")], help="e.g. 0,10,1000")
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--k-max", type=int)
    p.add_argument("--step-size", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--ns1", type=_size_arg)
    p.add_argument("--ns2", type=lambda t: [_size_arg(v) for v in t.split(",")])
    p.add_argument("--workers", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--data", help="CSV file (needs --sensitive and --label)")
    p.add_argument("--sensitive")
    p.add_argument("--label")
    p.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("gen-data", help="write a seeded biased dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    for f in ("n_samples", "n_features"):
        p.add_argument("--" + f.replace("_", "-"), type=int)
    for f in ("p_sensitive", "separation", "bias_rate", "base_offset", "noise"):
        p.add_argument("--" + f.replace("_", "-"), type=float)

    p = sub.add_parser("stage1", help="fairness-mitigated synthetic data for one client")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="synthetic CSV to write")
    _schema_args(p)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--mode", choices=[m.value for m in Mode], default="sp")
    p.add_argument("--ns1", type=_size_arg, default=1.0)
    p.add_argument("--k-max", type=int, default=AdamConfig.k_max)
    p.add_argument("--step-size", type=float, default=AdamConfig.step_size)
    p.add_argument("--lambda-xhat", type=float, default=1e-4)
    p.add_argument("--lambda-theta", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="CSV for the per-iteration trace")

    p = sub.add_parser("stage2", help="differentially private re-synthesis")
    p.add_argument("--data", required=True, help="stage-1 synthetic CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--ledger", help="privacy ledger JSON (default: <out>.ledger.json)")
    _schema_args(p)
    p.add_argument("--epsilon", type=float, default=DpConfig.epsilon)
    p.add_argument("--delta", type=float, default=DpConfig.delta)
    p.add_argument("--ns2", type=_size_arg, default=1.0)
    p.add_argument("--clip-bound", type=float, default=DpConfig.clip_bound)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evaluate", help="train the server model and score it")
    p.add_argument("--train", required=True, nargs="+", help="training CSV(s), concatenated")
    p.add_argument("--test", required=True)
    _schema_args(p)
    p.add_argument("--lambda-theta", type=float, default=1e-4)
    p.add_argument("--theta-out", help="write the model parameters as JSON")

    p = sub.add_parser("report", help="re-emit tables from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", help="target directory (default: <run_dir>/rebuilt)")
    return parser


def _cmd_run(args):
    overrides = []
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides.append((k.strip(), parse_value(v.strip())))
    for flag, key in _RUN_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            overrides.append((key, v.value if isinstance(v, Mode) else v))
    if args.intercept is not None:
        overrides.append(("intercept", args.intercept))
    cfg = load_config(args.config, overrides)
    out = args.out or cfg.output_dir or os.path.join("runs", cfg.digest())
    report = run_pipeline(cfg)
    paths = emit_report(report, out)
    with open(os.path.join(out, "config.json"), "w") as fh:
        fh.write(config_json(cfg) + "\n")
    _print_rows(report)
    print(f"wrote {len(paths) + 1} files under {out}")
    return 0 if all(r.status == "ok" for r in report.rows) else 3


def _print_rows(report: RunReport):
    metric = "abs_eod" if report.mode == "eo" else "abs_spd"
    print(f"{'rho_o':>8} {'stage':>8} {'size':>6} {'acc%':>7} {metric:>8} {'uplink':>8} status")
    for r in report.rows:
        print(f"{r.rho:8g} {r.stage:>8} {r.size:>6} {r.accuracy:7.2f} {getattr(r, metric):8.4f} "
              f"{r.uplink:8d} {r.status}")


def _cmd_gen_data(args):
    kw = {f: getattr(args, f) for f in ("n_samples", "n_features", "p_sensitive", "separation",
                                         "bias_rate", "base_offset", "noise")
          if getattr(args, f) is not None}
    ds = make_biased_dataset(BiasSpec(**kw), args.seed)
    write_dataset(ds, args.out)
    print(f"wrote {len(ds)} rows to {args.out}")
    return 0


def _cmd_stage1(args):
    ds = load_dataset(args.data, _schema(args))
    if args.standardize:
        ds, _ = standardize(ds)
    cfg = PenaltyConfig(rho_o=args.rho, lambda_xhat=args.lambda_xhat, lambda_theta=args.lambda_theta,
                        mode=args.mode, ns1=resolve_size(args.ns1, len(ds)), seed=args.seed)
    syn, trace = learn_stage1(ds, cfg, AdamConfig(step_size=args.step_size, k_max=args.k_max))
    write_dataset(syn.data, args.out)
    if args.trace:
        trace.to_csv(args.trace)
    print(f"wrote {len(syn)} synthetic rows to {args.out} ({len(trace)} outer iterations)")
    return 0


def _cmd_stage2(args):
    ds = load_dataset(args.data, _schema(args))
    cfg = DpConfig(epsilon=args.epsilon, delta=args.delta, ns2=resolve_size(args.ns2, len(ds)),
                   clip_bound=args.clip_bound, seed=args.seed)
    syn2, ledger = generate_dp(SyntheticDataset(ds, "stage1"), cfg)
    write_dataset(syn2.data, args.out)
    path = args.ledger or args.out + ".ledger.json"
    ledger.to_json(path)
    print(f"wrote {len(syn2)} rows to {args.out}; ledger total "
          f"(eps={ledger.total_epsilon:g}, delta={ledger.total_delta:g}) in {path}")
    return 0


def _cmd_evaluate(args):
    from .data import concat
    schema = _schema(args)
    train = concat([load_dataset(p, schema) for p in args.train])
    test = load_dataset(args.test, schema)
    theta, rec = fit_model(train, InnerSolveConfig(lambda_theta=args.lambda_theta))
    rep = evaluate(test, theta)
    out = rep.as_dict()
    out["converged"] = rec.converged
    print(json.dumps(out, indent=2, sort_keys=True, default=_nan_null))
    if args.theta_out:
        with open(args.theta_out, "w") as fh:
            json.dump([float(v) for v in theta], fh)
            fh.write("\n")
    return 0


def _nan_null(o):
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


def _cmd_report(args):
    with open(os.path.join(args.run_dir, "report.json")) as fh:
        report = RunReport.from_dict(json.load(fh))
    out = args.out or os.path.join(args.run_dir, "rebuilt")
    emit_report(report, out)
    _print_rows(report)
    return 0


_COMMANDS = {"run": _cmd_run, "gen-data": _cmd_gen_data, "stage1": _cmd_stage1,
             "stage2": _cmd_stage2, "evaluate": _cmd_evaluate, "report": _cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DataError, BudgetError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
