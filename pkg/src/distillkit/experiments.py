"""Experiment orchestration: sweeps, trials, seeding and table emission.

Seed protocol: trial/seed index t derives its seed as base_seed + t * 10007;
every random draw inside a run is reachable from the config alone, so a
rerun with an identical config reproduces outputs byte for byte.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path

import numpy as np

from . import baselines, linreg
from .data import load_csv_regression, standardize, train_test_split
from .envs import (collect_policy, collect_random, make_env, merge_datasets,
                   train_tabular_expert_mountaincar)
from .fqi import FQIConfig, evaluate_policy, fqi_train, greedy_policy, make_synthetic_evaluator
from .lowerbound import construct_counterexample, null_symmetric, verify
from .nn import FeatureMap
from .report import ResultsTable, save_results
from .rldistill import LR_GRID, PredictorArch, RLDistillConfig, distill_rl

SEED_STRIDE = 10007

DEFAULT_SUPERVISED = {
    "kind": "supervised",
    "dataset": {"path": "data/winequality-red.csv", "format": "wine",
                "label_col": -1, "header": None},
    "n_syn": [20, 50, 100],
    "k": 100,
    "n_eval": 100,
    "trials": 10,
    "base_seed": 0,
    "test_fraction": 0.2,
    "distill": {"learning_rate": 0.01, "max_steps": 5000, "project": True, "eval_stride": 10},
    "model": {"learning_rate": 0.001, "steps": 5000},
    "columns": ["train", "syn", "rand", "lev"],
    "out_dir": "runs/supervised",
    "name": "results",
    "title": "supervised distillation",
}

DEFAULT_OFFLINE_RL = {
    "kind": "offline-rl",
    "env": "cartpole",
    "n_train": 10000,
    "expert_mix": None,  # {"random": 5000, "expert": 5000, "bins": [40, 40], "episodes": 20000}
    "gamma": 0.99,
    "k": [20],
    "n_syn": [50, 100],
    "n_seeds": 1,
    "base_seed": 0,
    "sigma": None,
    "hidden": [10, 10],
    "distill": {"max_steps": 400, "lr_grid": list(LR_GRID)},
    "fqi": {"iterations": 50, "inner_epochs": 200, "inner_lr": 1e-3, "batch_size": None},
    "eval_episodes": 10,
    "rand_resamples": 10,
    "columns": ["train", "rand", "syn"],
    "out_dir": "runs/offline-rl",
    "name": "results",
    "title": "offline RL distillation",
}

DEFAULT_LOWERBOUND = {
    "kind": "lowerbound",
    "q": list(range(2, 21)),
    "T": None,  # regressors per q; default q(q+1)/2 - 1, the largest guaranteed
    "base_seed": 0,
    "out_dir": "runs/lowerbound",
    "name": "results",
}

DEFAULTS = {
    "supervised": DEFAULT_SUPERVISED,
    "offline-rl": DEFAULT_OFFLINE_RL,
    "lowerbound": DEFAULT_LOWERBOUND,
}


def merge_config(defaults: dict, override: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def trial_seed(base_seed: int, t: int) -> int:
    return base_seed + t * SEED_STRIDE


def _sub_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(list(parts))


def _stat(values) -> dict:
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "n": len(arr)}


def _fmt_pm(stat: dict) -> str:
    return f"{stat['mean']:.2f} ± {stat['std']:.2f}"


# -- supervised ---------------------------------------------------------------


def run_supervised(cfg: dict) -> dict:
    """Distill, subsample and train on each dataset size; emit the results table.

    One trial = one 80/20 reshuffle. The distillation is initialized at the
    same subsample that serves as the random baseline.
    """
    cfg = merge_config(DEFAULT_SUPERVISED, cfg)
    ds_cfg = cfg["dataset"]
    raw = load_csv_regression(ds_cfg["path"], ds_cfg["format"],
                              header=ds_cfg.get("header"), label_col=ds_cfg.get("label_col", -1))
    std_ds, _ = standardize(raw)
    model_cfg = cfg["model"]
    columns = cfg["columns"]

    cells = {c: {m: [] for m in cfg["n_syn"]} for c in columns}
    for t in range(cfg["trials"]):
        seed = trial_seed(cfg["base_seed"], t)
        train, test = train_test_split(std_ds, cfg["test_fraction"], seed)
        if "train" in columns:
            f_full = linreg.train_linear(train, model_cfg["learning_rate"], model_cfg["steps"])
            full_mse = linreg.evaluate_mse(f_full, test)
        for m in cfg["n_syn"]:
            d_rand = baselines.random_subsample(train, m, _sub_rng(seed, 1, m))
            produced = {}
            if "train" in columns:
                produced["train"] = full_mse
            if "rand" in columns or "syn" in columns:
                if "rand" in columns:
                    f = linreg.train_linear(d_rand, model_cfg["learning_rate"], model_cfg["steps"])
                    produced["rand"] = linreg.evaluate_mse(f, test)
                if "syn" in columns:
                    dcfg = linreg.DistillConfig(
                        m=m, k=cfg["k"], n_eval=cfg["n_eval"],
                        learning_rate=cfg["distill"]["learning_rate"],
                        max_steps=cfg["distill"]["max_steps"],
                        project=cfg["distill"]["project"],
                        eval_stride=cfg["distill"]["eval_stride"], seed=seed)
                    d_syn, _ = linreg.distill(train, dcfg, _sub_rng(seed, 3, m), init=d_rand)
                    f = linreg.train_linear(d_syn, model_cfg["learning_rate"], model_cfg["steps"])
                    produced["syn"] = linreg.evaluate_mse(f, test)
            if "lev" in columns:
                d_lev = baselines.leverage_subsample(train, m, _sub_rng(seed, 2, m))
                f = linreg.train_linear(d_lev, model_cfg["learning_rate"], model_cfg["steps"])
                produced["lev"] = linreg.evaluate_mse(f, test)
            for c, v in produced.items():
                cells[c][m].append(v)

    col_names = [f"D_{c}" for c in columns]
    rows = []
    series = {}
    for c in columns:
        series[f"D_{c}"] = [_stat(cells[c][m]) for m in cfg["n_syn"]]
    for m in cfg["n_syn"]:
        row = {"N_syn": m}
        for c in columns:
            row[f"D_{c}"] = _fmt_pm(_stat(cells[c][m]))
        rows.append(row)
    table = ResultsTable(columns=["N_syn"] + col_names, rows=rows)
    payload = {
        "kind": "supervised",
        "title": cfg.get("title", ""),
        "config": cfg,
        "n_syn": cfg["n_syn"],
        "series": series,
        "cells": {c: {str(m): cells[c][m] for m in cfg["n_syn"]} for c in columns},
    }
    paths = save_results(cfg["out_dir"], cfg["name"], table, payload)
    return {"table": table, "payload": payload, "paths": paths}


# -- offline RL ----------------------------------------------------------------


def build_training_dataset(cfg: dict, seed: int):
    """Collect the offline training data for one experiment seed."""
    env_name = cfg["env"]
    gamma = cfg["gamma"]
    mix = cfg.get("expert_mix")
    if not mix:
        return collect_random(make_env(env_name), cfg["n_train"], seed, gamma)
    if env_name != "mountaincar":
        raise ValueError("expert collection is only defined for mountaincar")
    expert = train_tabular_expert_mountaincar(tuple(mix.get("bins", (40, 40))),
                                              mix.get("episodes", 20000), seed)
    d_rand = collect_random(make_env(env_name), mix["random"], seed, gamma)
    d_exp = collect_policy(make_env(env_name), expert, mix["expert"], seed + 1, gamma)
    return merge_datasets(d_rand, d_exp)


def _take_transitions(ds, idx):
    from .envs import OfflineRLDataset
    return OfflineRLDataset([ds.transitions[i] for i in idx], ds.gamma, ds.env_name)


def run_offline_rl(cfg: dict) -> dict:
    """FQI returns for models trained on full, random-subsampled and distilled data."""
    cfg = merge_config(DEFAULT_OFFLINE_RL, cfg)
    env_name = cfg["env"]
    spec_env = make_env(env_name).spec
    fmap = FeatureMap("concat_onehot", action_count=spec_env.action_count,
                      state_dim=spec_env.state_dim)
    arch = PredictorArch("mlp", fmap, hidden=tuple(cfg["hidden"]))
    fqi_cfg_base = dict(cfg["fqi"])
    columns = cfg["columns"]

    raw = []
    for i in range(cfg["n_seeds"]):
        seed = trial_seed(cfg["base_seed"], i)
        train = build_training_dataset(cfg, seed)
        fqi_cfg = FQIConfig(gamma=cfg["gamma"], seed=seed, hidden=tuple(cfg["hidden"]),
                            **fqi_cfg_base)
        train_stat = None
        if "train" in columns:
            q = fqi_train(train, fqi_cfg, np.random.default_rng(seed))
            train_stat = evaluate_policy(make_env(env_name), greedy_policy(q),
                                         cfg["eval_episodes"], seed)
        for k in cfg["k"]:
            for m in cfg["n_syn"]:
                entry = {"seed": seed, "k": k, "N_syn": m}
                if train_stat is not None:
                    entry["train"] = train_stat
                if "rand" in columns:
                    rng = _sub_rng(seed, 4, k, m)
                    returns = []
                    for _ in range(cfg["rand_resamples"]):
                        idx = rng.choice(len(train), size=m, replace=False)
                        q = fqi_train(_take_transitions(train, idx), fqi_cfg,
                                      np.random.default_rng(seed))
                        ev = evaluate_policy(make_env(env_name), greedy_policy(q), 1,
                                             int(rng.integers(2**31)))
                        returns.append(ev["returns"][0])
                    entry["rand"] = _stat(returns)
                if "syn" in columns:
                    dcfg = RLDistillConfig(
                        m=m, k=k, sigma=cfg["sigma"], gamma=cfg["gamma"],
                        lr_grid=tuple(cfg["distill"]["lr_grid"]),
                        max_steps=cfg["distill"]["max_steps"], seed=seed)
                    evaluator = make_synthetic_evaluator(env_name, fqi_cfg,
                                                         cfg["eval_episodes"], seed)
                    _, rep = distill_rl(train, dcfg, arch, _sub_rng(seed, 5, k, m),
                                        evaluator=evaluator)
                    entry["syn"] = rep.result["chosen_eval"]
                    entry["chosen_lr"] = rep.result["chosen_lr"]
                raw.append(entry)
        del train

    col_names = [f"D_{c}" for c in columns]
    table_rows = []
    for entry in raw:
        row = {"seed": entry["seed"], "k": entry["k"], "N_syn": entry["N_syn"]}
        for c in columns:
            if c in entry:
                stat = entry[c] if "mean" in entry[c] else _stat(entry[c]["returns"])
                row[f"D_{c}"] = _fmt_pm(stat)
        table_rows.append(row)
    table = ResultsTable(columns=["seed", "k", "N_syn"] + col_names, rows=table_rows)

    series = {}
    for c in columns:
        for k in cfg["k"]:
            stats = []
            for m in cfg["n_syn"]:
                vals = [e[c]["mean"] for e in raw
                        if c in e and e["k"] == k and e["N_syn"] == m]
                stats.append(_stat(vals) if vals else {"mean": float("nan"), "std": 0.0, "n": 0})
            series[f"D_{c} (k={k})"] = stats
    payload = {
        "kind": "offline-rl",
        "title": cfg.get("title", ""),
        "config": cfg,
        "n_syn": cfg["n_syn"],
        "series": series,
        "raw": raw,
    }
    paths = save_results(cfg["out_dir"], cfg["name"], table, payload)
    return {"table": table, "payload": payload, "paths": paths}


# -- lower bound ----------------------------------------------------------------


def run_lowerbound(cfg: dict) -> dict:
    """Adversarial construction sweep: q(q+1)/2 - 1 random regressors per q."""
    cfg = merge_config(DEFAULT_LOWERBOUND, cfg)
    rows = []
    for q in cfg["q"]:
        T = cfg["T"] if cfg["T"] is not None else q * (q + 1) // 2 - 1
        rng = _sub_rng(cfg["base_seed"], q)
        regs = rng.standard_normal((T, q))
        witness = null_symmetric(regs)
        bundle = construct_counterexample(witness)
        rep = verify(bundle, regs)
        rows.append({"q": q, "T": T, "max_equal_dev": rep["max_equal_dev"],
                     "gap": rep["gap"], "expected_gap": 1.0 / (4.0 * q * q),
                     "pass": rep["pass"]})
    table = ResultsTable(columns=["q", "T", "max_equal_dev", "gap", "expected_gap", "pass"],
                         rows=rows)
    payload = {"kind": "lowerbound", "config": cfg, "rows": rows,
               "all_pass": all(r["pass"] for r in rows)}
    paths = save_results(cfg["out_dir"], cfg["name"], table, payload)
    return {"table": table, "payload": payload, "paths": paths}


def run_experiment(cfg: dict) -> dict:
    kind = cfg.get("kind")
    if kind == "supervised":
        return run_supervised(cfg)
    if kind == "offline-rl":
        return run_offline_rl(cfg)
    if kind == "lowerbound":
        return run_lowerbound(cfg)
    raise ValueError(f"unknown experiment kind {kind!r}")
