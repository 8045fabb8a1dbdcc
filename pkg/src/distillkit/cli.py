"""Command-line interface for distillation runs, baselines and reports.

Every experiment subcommand takes a JSON config (--config) on top of built-in
defaults, with individual fields overridable as --set key=value (dotted keys,
JSON-parsed values). The DISTILLKIT_SEED environment variable overrides
base_seed everywhere.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, linreg
from .data import load_csv_regression, standardize
from .envs import collect_random, collect_policy, load_dataset, make_env, save_dataset, \
    train_tabular_expert_mountaincar
from .experiments import DEFAULTS, merge_config, run_experiment
from .fqi import FQIConfig, evaluate_policy, fqi_train, greedy_policy
from .nn import MLP2, FeatureMap
from .report import ResultsTable, render_figure, save_results
from .rldistill import NeuralQ


def _parse_set(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return out


def _load_config(kind: str, args) -> dict:
    cfg = dict(DEFAULTS[kind])
    if getattr(args, "config", None):
        cfg = merge_config(cfg, json.loads(Path(args.config).read_text()))
    cfg = merge_config(cfg, _parse_set(getattr(args, "set", None)))
    cfg["kind"] = kind
    env_seed = os.environ.get("DISTILLKIT_SEED")
    if env_seed is not None:
        cfg["base_seed"] = int(env_seed)
    return cfg


def _add_config_args(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (dotted keys, JSON values)")


def _cmd_experiment(kind):
    def run(args):
        cfg = _load_config(kind, args)
        res = run_experiment(cfg)
        print(res["table"].to_text(), end="")
        for label, path in res["paths"].items():
            print(f"wrote {label}: {path}")
    return run


def _cmd_baseline(args):
    ds = load_csv_regression(args.data, args.format)
    if args.standardize:
        ds, _ = standardize(ds)
    rng = np.random.default_rng(args.seed)
    if args.method == "random":
        sub = baselines.random_subsample(ds, args.m, rng)
    elif args.method == "leverage":
        sub = baselines.leverage_subsample(ds, args.m, rng)
    elif args.method == "moment-reduce":
        sub = baselines.moment_reduce(ds)
    else:
        raise SystemExit(f"unknown method {args.method!r}")
    rows = np.column_stack([sub.features, sub.labels])
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(
        "\n".join(",".join(repr(float(v)) for v in row) for row in rows) + "\n")
    print(f"wrote {len(rows)} rows to {args.out}")


def _cmd_collect(args):
    env = make_env(args.env)
    if args.policy == "random":
        ds = collect_random(env, args.n, args.seed, args.gamma)
    elif args.policy == "expert":
        if args.env != "mountaincar":
            raise SystemExit("expert collection is only defined for mountaincar")
        expert = train_tabular_expert_mountaincar(seed=args.seed)
        if expert.warning:
            print(f"warning: {expert.warning}", file=sys.stderr)
        ds = collect_policy(env, expert, args.n, args.seed, args.gamma)
    else:
        raise SystemExit(f"unknown policy {args.policy!r}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, args.out)
    n_term = sum(t.terminated for t in ds.transitions)
    print(f"wrote {len(ds)} transitions ({n_term} terminated) to {args.out}")


def _cmd_train_fqi(args):
    ds = load_dataset(args.data, args.gamma, args.env)
    cfg = FQIConfig(iterations=args.iterations, inner_epochs=args.inner_epochs,
                    inner_lr=args.lr, gamma=args.gamma, seed=args.seed,
                    hidden=tuple(args.hidden))
    q = fqi_train(ds, cfg)
    payload = {"net": q.net.to_jsonable(),
               "fmap": {"mode": q.fmap.mode, "action_count": q.fmap.action_count,
                        "state_dim": q.fmap.state_dim}}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"wrote checkpoint to {args.out}")


def _cmd_eval_policy(args):
    payload = json.loads(Path(args.checkpoint).read_text())
    fmap = FeatureMap(payload["fmap"]["mode"], payload["fmap"]["action_count"],
                      payload["fmap"]["state_dim"])
    q = NeuralQ(MLP2.from_jsonable(payload["net"]), fmap)
    stats = evaluate_policy(make_env(args.env), greedy_policy(q), args.episodes, args.seed)
    print(json.dumps(stats, sort_keys=True, indent=2))


def _cmd_report(args):
    payload = json.loads(Path(args.results).read_text())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig_path = render_figure(payload, out_dir / f"{Path(args.results).stem}.png")
    print(f"wrote figure: {fig_path}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="distillkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for kind, name in (("supervised", "distill-sup"), ("offline-rl", "distill-rl"),
                       ("lowerbound", "lowerbound")):
        p = sub.add_parser(name, help=f"run the {kind} experiment")
        _add_config_args(p)
        p.set_defaults(func=_cmd_experiment(kind))

    p = sub.add_parser("baseline", help="subsample or moment-reduce a regression dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="generic", choices=["wine", "housing", "generic"])
    p.add_argument("--method", required=True, choices=["random", "leverage", "moment-reduce"])
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("collect", help="collect an offline dataset from an environment")
    p.add_argument("--env", required=True, choices=["cartpole", "mountaincar", "acrobot"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--policy", default="random", choices=["random", "expert"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_collect)

    p = sub.add_parser("train-fqi", help="train a Q-network on an offline dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--env", required=True, choices=["cartpole", "mountaincar", "acrobot"])
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--inner-epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, nargs=2, default=[10, 10])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_fqi)

    p = sub.add_parser("eval-policy", help="evaluate a trained Q-network checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env", required=True, choices=["cartpole", "mountaincar", "acrobot"])
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval_policy)

    p = sub.add_parser("report", help="render table figures from a saved results JSON")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", default="figs")
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
