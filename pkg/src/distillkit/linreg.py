"""Supervised dataset distillation by MSE-loss matching against random regressors.

A homogeneous regressor is a vector r of length d+1 acting on points
z = (x, y); its residual on (x, y) is r.z, which equals v.x - y when
r = (v, -1). The distillation objective is the sum over a fixed sampled
ensemble of squared differences between the per-regressor mean squared
residuals on the training and synthetic datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import RegressionDataset, dehomogenize, homogenize
from .optim import AdamState, adam_update
from .report import DistillReport


@dataclass
class RegressorEnsemble:
    """k homogeneous regressors stacked row-wise, reproducible from seed."""

    regressors: np.ndarray  # (k, d+1)
    seed: int

    @property
    def k(self) -> int:
        return self.regressors.shape[0]


@dataclass
class DistillConfig:
    m: int  # synthetic dataset size
    k: int = 100  # matching ensemble size
    n_eval: int = 100  # held-out checkpoint ensemble size
    learning_rate: float = 0.01
    max_steps: int = 5000
    seed: int = 0
    project: bool = True
    eval_stride: int = 1  # checkpoint cadence, in steps

    def __post_init__(self):
        for name in ("m", "k", "n_eval", "max_steps"):
            if getattr(self, name) < (0 if name == "max_steps" else 1):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def sample_regressor_G(d: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from the matching distribution: N(0, 1/(d+1)) per coordinate."""
    if d < 1:
        raise ValueError("d must be >= 1")
    q = d + 1
    return rng.normal(0.0, 1.0 / np.sqrt(q), size=q)


def sample_ensemble(d: int, k: int, seed: int) -> RegressorEnsemble:
    rng = np.random.default_rng(seed)
    q = d + 1
    return RegressorEnsemble(rng.normal(0.0, 1.0 / np.sqrt(q), size=(k, q)), seed)


def predictor_vector(v: np.ndarray) -> np.ndarray:
    """Canonical predictor form r = (v, -1) so that r.z = v.x - y."""
    return np.append(np.asarray(v, dtype=float), -1.0)


def mse_loss(ds: RegressionDataset, r: np.ndarray) -> float:
    """Mean squared residual (1/n) sum (r.z_i)^2 over homogenized points."""
    r = np.asarray(r, dtype=float)
    if r.shape != (ds.d + 1,):
        raise ValueError(f"regressor has shape {r.shape}, expected ({ds.d + 1},)")
    res = homogenize(ds) @ r
    return float(np.mean(res * res))


def ensemble_losses(points: np.ndarray, ens: RegressorEnsemble) -> np.ndarray:
    """Per-regressor mean squared residuals on homogeneous points, shape (k,)."""
    s = ens.regressors @ points.T
    return np.mean(s * s, axis=1)


def loss_match_objective(train: RegressionDataset, syn: RegressionDataset,
                         ens: RegressorEnsemble) -> float:
    if train.d != syn.d:
        raise ValueError(f"dimension mismatch: train d={train.d}, syn d={syn.d}")
    lt = ensemble_losses(homogenize(train), ens)
    ls = ensemble_losses(homogenize(syn), ens)
    return float(np.sum((lt - ls) ** 2))


def objective_gradient(train: RegressionDataset, syn: RegressionDataset,
                       ens: RegressorEnsemble) -> np.ndarray:
    """Gradient of the matching objective w.r.t. the homogeneous synthetic points.

    d/dz_i = sum_j 2 (L_syn_j - L_train_j) (2/m) (g_j . z_i) g_j, shape (m, d+1).
    """
    if train.d != syn.d:
        raise ValueError(f"dimension mismatch: train d={train.d}, syn d={syn.d}")
    z = homogenize(syn)
    lt = ensemble_losses(homogenize(train), ens)
    s = ens.regressors @ z.T  # (k, m)
    ls = np.mean(s * s, axis=1)
    diff = ls - lt
    return (4.0 / syn.n) * (s.T * diff) @ ens.regressors


def _project_points(z: np.ndarray, B: float, b: float) -> np.ndarray:
    """Feature rows onto the radius-B ball, labels clamped to [-b, b]."""
    x, y = z[:, :-1], z[:, -1]
    norms = np.linalg.norm(x, axis=1)
    scale = np.where(norms > B, np.divide(B, norms, out=np.ones_like(norms), where=norms > 0), 1.0)
    return np.column_stack([x * scale[:, None], np.clip(y, -b, b)])


def project_feasible(syn: RegressionDataset, B: float, b: float) -> RegressionDataset:
    """Radial projection of feature rows plus label clamping."""
    if B <= 0 or b <= 0:
        raise ValueError("bounds must be positive")
    z = _project_points(homogenize(syn), B, b)
    return RegressionDataset(z[:, :-1], z[:, -1], B, b)


def distill(train: RegressionDataset, cfg: DistillConfig,
            rng: np.random.Generator | None = None,
            init: RegressionDataset | None = None) -> tuple[RegressionDataset, DistillReport]:
    """Optimize a synthetic dataset to match per-regressor MSE losses.

    The synthetic points start as a uniform subsample of the training set
    (or `init` when given), are updated by Adam on the matching objective,
    optionally projected onto the training feasible set each step, and the
    iterate with minimum objective on a fresh held-out ensemble is returned.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if init is None:
        if cfg.m > train.n:
            raise ValueError(f"m={cfg.m} exceeds training size n={train.n}")
        idx = rng.choice(train.n, size=cfg.m, replace=False)
        init = train.take(idx)
    elif init.d != train.d:
        raise ValueError("init dimension differs from training data")

    match_seed = int(rng.integers(2**63))
    eval_seed = int(rng.integers(2**63))
    ens = sample_ensemble(train.d, cfg.k, match_seed)
    eval_ens = sample_ensemble(train.d, cfg.n_eval, eval_seed)

    zt = homogenize(train)
    lt = ensemble_losses(zt, ens)
    lt_eval = ensemble_losses(zt, eval_ens)
    B, b = train.feature_bound, train.label_bound

    z = homogenize(init).copy()
    params = {"z": z}
    state = AdamState()

    def match_obj(points):
        return float(np.sum((ensemble_losses(points, ens) - lt) ** 2))

    def eval_obj(points):
        return float(np.sum((ensemble_losses(points, eval_ens) - lt_eval) ** 2))

    obj_trace = [match_obj(z)]
    eval_trace = [eval_obj(z)]
    best = (eval_trace[0], 0, z.copy())

    for step in range(1, cfg.max_steps + 1):
        s = ens.regressors @ params["z"].T
        diff = np.mean(s * s, axis=1) - lt
        grad = (4.0 / cfg.m) * (s.T * diff) @ ens.regressors
        params, state = adam_update(params, {"z": grad}, state, cfg.learning_rate)
        if cfg.project:
            params["z"] = _project_points(params["z"], B, b)
        if step % cfg.eval_stride == 0 or step == cfg.max_steps:
            obj_trace.append(match_obj(params["z"]))
            ev = eval_obj(params["z"])
            eval_trace.append(ev)
            if ev < best[0]:  # strict: earliest step wins ties
                best = (ev, step, params["z"].copy())

    syn = RegressionDataset(best[2][:, :-1], best[2][:, -1], B, b)
    report = DistillReport(
        kind="supervised-distill",
        config={"m": cfg.m, "k": cfg.k, "n_eval": cfg.n_eval,
                "learning_rate": cfg.learning_rate, "max_steps": cfg.max_steps,
                "project": cfg.project, "eval_stride": cfg.eval_stride},
        seeds={"config": cfg.seed, "match_ensemble": match_seed, "eval_ensemble": eval_seed},
        traces={"objective": obj_trace, "eval_objective": eval_trace},
        result={"best_step": best[1], "best_eval_objective": best[0],
                "final_objective": obj_trace[-1],
                "synthetic": {"features": syn.features.tolist(), "labels": syn.labels.tolist()}},
    )
    return syn, report


def train_linear(ds: RegressionDataset, lr: float = 0.001, steps: int = 5000,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Fit a homogeneous linear model f(x) = v.x by full-batch Adam from zero.

    Returns the regressor in canonical form r = (v, -1). The rng parameter is
    accepted for interface symmetry; the optimization itself is deterministic.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x, y = ds.features, ds.labels
    params = {"v": np.zeros(ds.d)}
    state = AdamState()
    for _ in range(steps):
        resid = x @ params["v"] - y
        grad = (2.0 / ds.n) * (x.T @ resid)
        params, state = adam_update(params, {"v": grad}, state, lr)
    return predictor_vector(params["v"])


def evaluate_mse(r: np.ndarray, test: RegressionDataset) -> float:
    """Test-set mean squared residual of a homogeneous regressor."""
    return mse_loss(test, r)
