"""Fitted-Q iteration over real or synthetic offline datasets.

Each outer iteration freezes the current net, rebuilds regression targets
(r + gamma * max_a' Q(s', a') for non-terminated rows, bare r for terminated
rows) and fits the net to them by Adam for a fixed number of epochs. The net
is warm-started across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import Env, OfflineRLDataset, _SPECS, make_env
from .nn import MLP2, FeatureMap, forward_batch, mlp_grad_weights
from .optim import AdamState, adam_update
from .rldistill import NeuralQ, SyntheticOfflineDataset

FULL_BATCH_LIMIT = 200


@dataclass
class FQIConfig:
    iterations: int = 50
    inner_epochs: int = 200
    inner_lr: float = 1e-3
    batch_size: int | None = None  # None: full batch up to FULL_BATCH_LIMIT rows, else 256
    gamma: float = 0.99
    seed: int = 0
    hidden: tuple = (10, 10)
    action_count: int | None = None  # None: from the dataset's environment

    def __post_init__(self):
        if min(self.iterations, self.inner_epochs) < 1 or self.inner_lr <= 0:
            raise ValueError("iterations, inner_epochs and inner_lr must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")


def _training_arrays(ds, nA: int):
    """Inputs [state | action block], rewards, next states, terminated mask."""
    if isinstance(ds, SyntheticOfflineDataset):
        X = np.vstack([np.hstack([ds.nt_s, ds.nt_a]), np.hstack([ds.t_s, ds.t_a])])
        R = np.concatenate([ds.nt_r, ds.t_r])
        SN = ds.nt_sn
        term = np.concatenate([np.zeros(len(ds.nt_r), dtype=bool),
                               np.ones(len(ds.t_r), dtype=bool)])
        return X, R, SN, term
    S, A, R, SN, term = ds.arrays()
    onehot = np.zeros((len(A), nA))
    onehot[np.arange(len(A)), A] = 1.0
    return np.hstack([S, onehot]), R, SN[~term], term


def _infer_action_count(ds, cfg: FQIConfig) -> int:
    if cfg.action_count is not None:
        return cfg.action_count
    if isinstance(ds, SyntheticOfflineDataset):
        return ds.action_count
    if ds.env_name in _SPECS:
        return _SPECS[ds.env_name].action_count
    return int(max(t.a for t in ds.transitions)) + 1


def _he_init(sizes, rng: np.random.Generator) -> MLP2:
    """Gaussian fan-in scaled weights, zero biases (trainable at any width)."""
    d_in, h1, h2 = sizes
    return MLP2(
        W1=rng.standard_normal((h1, d_in)) * np.sqrt(2.0 / d_in),
        b1=np.zeros(h1),
        W2=rng.standard_normal((h2, h1)) * np.sqrt(2.0 / h1),
        b2=np.zeros(h2),
        w_out=rng.standard_normal(h2) * np.sqrt(2.0 / h2),
        b_out=0.0,
    )


def _max_q(net: MLP2, states: np.ndarray, nA: int) -> np.ndarray:
    if len(states) == 0:
        return np.zeros(0)
    cols = []
    for a in range(nA):
        onehot = np.zeros((len(states), nA))
        onehot[:, a] = 1.0
        cols.append(forward_batch(net, np.hstack([states, onehot])))
    return np.stack(cols, axis=1).max(axis=1)


def value_envelope(reward_range, gamma: float) -> tuple:
    """Range of reachable discounted values for rewards in the given range."""
    lo, hi = reward_range
    return (min(lo, lo / (1.0 - gamma)), max(hi, hi / (1.0 - gamma)))


def bellman_targets(net: MLP2, R: np.ndarray, SN: np.ndarray, term: np.ndarray,
                    gamma: float, nA: int, value_range: tuple | None = None) -> np.ndarray:
    """Regression targets for one iteration: terminated rows never bootstrap.

    Clipping targets into the discounted value envelope keeps the iteration
    from diverging when the net extrapolates off tiny datasets.
    """
    targets = R.copy()
    if len(SN):
        targets[~term] = R[~term] + gamma * _max_q(net, SN, nA)
    if value_range is not None:
        targets = np.clip(targets, *value_range)
    return targets


def _reward_range(ds) -> tuple:
    if isinstance(ds, SyntheticOfflineDataset):
        return ds.reward_range
    if ds.env_name in _SPECS:
        return _SPECS[ds.env_name].reward_range
    rewards = [t.r for t in ds.transitions]
    return (float(min(rewards)), float(max(rewards)))


def fqi_train(ds, cfg: FQIConfig, rng: np.random.Generator | None = None) -> NeuralQ:
    """Train a Q-network on an offline dataset by fitted-Q iteration."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    nA = _infer_action_count(ds, cfg)
    X, R, SN, term = _training_arrays(ds, nA)
    if len(X) == 0:
        raise ValueError("empty dataset")
    d0 = X.shape[1] - nA
    net = _he_init((X.shape[1], *cfg.hidden), rng)
    n = len(X)
    batch = cfg.batch_size if cfg.batch_size is not None else (
        n if n <= FULL_BATCH_LIMIT else 256)
    value_range = value_envelope(_reward_range(ds), cfg.gamma) if cfg.gamma > 0 else None

    for _ in range(cfg.iterations):
        targets = bellman_targets(net, R, SN, term, cfg.gamma, nA, value_range)
        params = net.params()
        state = AdamState()
        for _ in range(cfg.inner_epochs):
            if batch >= n:
                grads = mlp_grad_weights(net, (X, targets))
                params, state = adam_update(params, grads, state, cfg.inner_lr)
                net = MLP2.from_params(params)
            else:
                order = rng.permutation(n)
                for start in range(0, n, batch):
                    idx = order[start:start + batch]
                    grads = mlp_grad_weights(net, (X[idx], targets[idx]))
                    params, state = adam_update(params, grads, state, cfg.inner_lr)
                    net = MLP2.from_params(params)

    fmap = FeatureMap("concat_onehot", action_count=nA, state_dim=d0)
    return NeuralQ(net, fmap)


def greedy_policy(q, actions=None):
    """State -> argmax_a Q(s, a) with ties broken by the lowest action index."""
    fmap = q.fmap
    acts = list(actions) if actions is not None else list(range(fmap.action_count))

    def policy(state) -> int:
        states = np.tile(np.asarray(state, dtype=float), (len(acts), 1))
        onehot = fmap.onehot(np.asarray(acts, dtype=int))
        vals = q.values(states, onehot)
        return acts[int(np.argmax(vals))]

    return policy


def evaluate_policy(env: Env, policy, episodes: int, seed: int) -> dict:
    """Undiscounted returns over seeded episodes; population std."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    returns = []
    for ep in range(episodes):
        obs = env.reset(seed + ep)
        total = 0.0
        while True:
            obs, r, term, trunc = env.step(policy(obs))
            total += r
            if term or trunc:
                break
        returns.append(total)
    arr = np.array(returns)
    return {"returns": returns, "mean": float(arr.mean()),
            "std": float(arr.std()), "max": float(arr.max())}


def make_synthetic_evaluator(env_name: str, fqi_cfg: FQIConfig, episodes: int, seed: int):
    """Evaluator for the distillation learning-rate search: FQI-train then roll out."""

    def evaluator(syn) -> dict:
        q = fqi_train(syn, fqi_cfg, np.random.default_rng(seed))
        pol = greedy_policy(q)
        return evaluate_policy(make_env(env_name), pol, episodes, seed)

    return evaluator
