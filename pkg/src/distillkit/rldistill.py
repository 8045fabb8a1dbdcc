"""Offline RL dataset distillation by Bellman-loss matching.

Randomly sampled Q-predictors (linear over a feature map, or small ReLU
nets on concat(state, action)) each carry a Gaussian reward scale; the
objective is the sum over the ensemble of squared differences between
per-predictor Bellman losses on the training and synthetic datasets.
Terminated transitions bootstrap nothing (their Q-target is the raw
reward), so the terminated and non-terminated partitions are matched as
two separate objectives and the synthetic dataset preserves the training
partition ratio.

Synthetic actions are relaxed real vectors over the action simplex
(initialized one-hot); the Bellman max is always taken over the original
discrete action set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envs import OfflineRLDataset, _SPECS
from .nn import MLP2, FeatureMap, forward_batch, input_grad_batch, mlp_init_gaussian
from .optim import AdamState, adam_update
from .report import DistillReport

LR_GRID = (3e-1, 1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


@dataclass
class LinearQ:
    v: np.ndarray
    fmap: FeatureMap

    def values(self, states, action_vectors) -> np.ndarray:
        return self.fmap.phi(states, action_vectors) @ self.v


@dataclass
class NeuralQ:
    net: MLP2
    fmap: FeatureMap  # concat_onehot: the net consumes [state | action block]

    def values(self, states, action_vectors) -> np.ndarray:
        X = np.hstack([np.atleast_2d(states), np.atleast_2d(action_vectors)])
        return forward_batch(self.net, X)


@dataclass
class QEnsembleSample:
    predictor: object  # LinearQ | NeuralQ
    lam: float


@dataclass
class PredictorArch:
    kind: str  # "linear" | "mlp"
    fmap: FeatureMap
    hidden: tuple = (10, 10)

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown predictor kind {self.kind!r}")


@dataclass
class SyntheticOfflineDataset:
    """Relaxed synthetic transitions, split by termination.

    Non-terminated rows are (s, a_relaxed, r, s_next); terminated rows drop
    the next state. `ratio` records the training partition sizes the
    synthetic sizes were derived from.
    """

    env_name: str
    gamma: float
    reward_range: tuple
    nt_s: np.ndarray
    nt_a: np.ndarray
    nt_r: np.ndarray
    nt_sn: np.ndarray
    t_s: np.ndarray
    t_a: np.ndarray
    t_r: np.ndarray
    ratio: tuple | None = None

    @property
    def m(self) -> int:
        return len(self.nt_r) + len(self.t_r)

    @property
    def action_count(self) -> int:
        block = self.nt_a if len(self.nt_a) else self.t_a
        return block.shape[1]

    def copy(self) -> "SyntheticOfflineDataset":
        return SyntheticOfflineDataset(
            self.env_name, self.gamma, self.reward_range,
            self.nt_s.copy(), self.nt_a.copy(), self.nt_r.copy(), self.nt_sn.copy(),
            self.t_s.copy(), self.t_a.copy(), self.t_r.copy(), self.ratio)

    def to_jsonable(self) -> dict:
        return {"env_name": self.env_name, "gamma": self.gamma,
                "reward_range": list(self.reward_range),
                "nonterminated": {"s": self.nt_s.tolist(), "a": self.nt_a.tolist(),
                                  "r": self.nt_r.tolist(), "s_next": self.nt_sn.tolist()},
                "terminated": {"s": self.t_s.tolist(), "a": self.t_a.tolist(),
                               "r": self.t_r.tolist()},
                "ratio": list(self.ratio) if self.ratio else None}


def synthetic_from_dataset(ds: OfflineRLDataset, ratio: tuple | None = None,
                           reward_range: tuple | None = None) -> SyntheticOfflineDataset:
    """Re-encode real transitions as a synthetic dataset with one-hot actions."""
    actions = _action_set(ds, None)
    nt, term = _as_blocks(ds, actions)
    d0 = len(ds.transitions[0].s)
    nA = len(actions)
    if reward_range is None:
        spec = _SPECS.get(ds.env_name)
        reward_range = spec.reward_range if spec else (
            float(min(t.r for t in ds.transitions)), float(max(t.r for t in ds.transitions)))
    nt = nt or (np.zeros((0, d0)), np.zeros((0, nA)), np.zeros(0), np.zeros((0, d0)))
    term = term or (np.zeros((0, d0)), np.zeros((0, nA)), np.zeros(0))
    return SyntheticOfflineDataset(ds.env_name, ds.gamma, reward_range,
                                   *nt, *term, ratio=ratio)


def sample_predictor_H(arch: PredictorArch, sigma: float | None,
                       rng: np.random.Generator) -> QEnsembleSample:
    """Draw (predictor, reward scale) with all parameters iid N(0, sigma^2).

    For linear predictors sigma defaults to 1/sqrt(d+1) where d is the
    feature dimension; for nets it defaults to 1 (standard normal weights).
    """
    if sigma is None:
        sigma = 1.0 / math.sqrt(arch.fmap.dim + 1) if arch.kind == "linear" else 1.0
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    lam = float(rng.normal(0.0, sigma))
    if arch.kind == "linear":
        v = rng.normal(0.0, sigma, size=arch.fmap.dim)
        return QEnsembleSample(LinearQ(v, arch.fmap), lam)
    d_in = arch.fmap.state_dim + arch.fmap.action_count
    net = mlp_init_gaussian((d_in, *arch.hidden), rng, scale=sigma)
    return QEnsembleSample(NeuralQ(net, arch.fmap), lam)


def sample_ensemble_H(arch: PredictorArch, k: int, sigma: float | None, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return [sample_predictor_H(arch, sigma, rng) for _ in range(k)]


def _max_over_actions(predictor, states, actions) -> tuple[np.ndarray, np.ndarray]:
    """Per-state max of f(s, a) over the discrete action set; also the argmax."""
    states = np.atleast_2d(states)
    fmap = predictor.fmap
    cols = []
    for a in actions:
        onehot = fmap.onehot(np.full(len(states), a, dtype=int))
        cols.append(predictor.values(states, onehot))
    vals = np.stack(cols, axis=1)  # (m, |A|)
    return vals.max(axis=1), vals.argmax(axis=1)


def _loss_parts(q: QEnsembleSample, gamma, actions, nt, term):
    """Sum of squared Bellman residuals for each partition (not yet averaged)."""
    nt_sum = t_sum = 0.0
    if nt is not None and len(nt[2]):
        s, a, r, sn = nt
        vmax, _ = _max_over_actions(q.predictor, sn, actions)
        u = q.predictor.values(s, a) - q.lam * r - gamma * vmax
        nt_sum = float(np.sum(u * u))
    if term is not None and len(term[2]):
        s, a, r = term
        w = q.predictor.values(s, a) - q.lam * r
        t_sum = float(np.sum(w * w))
    return nt_sum, t_sum


def _as_blocks(ds, actions):
    """Normalize either dataset type into (nt, term) array blocks."""
    if isinstance(ds, SyntheticOfflineDataset):
        nt = (ds.nt_s, ds.nt_a, ds.nt_r, ds.nt_sn) if len(ds.nt_r) else None
        term = (ds.t_s, ds.t_a, ds.t_r) if len(ds.t_r) else None
        return nt, term
    nonterm, term_rows = ds.split_terminated()
    nA = len(actions)

    def onehot(rows):
        out = np.zeros((len(rows), nA))
        out[np.arange(len(rows)), [t.a for t in rows]] = 1.0
        return out

    nt = None
    if nonterm:
        nt = (np.stack([t.s for t in nonterm]), onehot(nonterm),
              np.array([t.r for t in nonterm]), np.stack([t.s_next for t in nonterm]))
    tm = None
    if term_rows:
        tm = (np.stack([t.s for t in term_rows]), onehot(term_rows),
              np.array([t.r for t in term_rows]))
    return nt, tm


def _action_set(ds, actions):
    if actions is not None:
        return list(actions)
    if isinstance(ds, SyntheticOfflineDataset):
        return list(range(ds.action_count))
    if ds.env_name in _SPECS:
        return list(range(_SPECS[ds.env_name].action_count))
    return list(range(int(max(t.a for t in ds.transitions)) + 1))


def bellman_loss(ds, q: QEnsembleSample, gamma: float, actions=None) -> float:
    """Mean squared (modified) Bellman residual over all transitions.

    Non-terminated rows use f(s,a) - lam*r - gamma*max_{a'} f(s',a') with the
    max over the original discrete action set; terminated rows use
    f(s,a) - lam*r.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    actions = _action_set(ds, actions)
    nt, term = _as_blocks(ds, actions)
    total = (0 if nt is None else len(nt[2])) + (0 if term is None else len(term[2]))
    if total == 0:
        raise ValueError("empty dataset")
    nt_sum, t_sum = _loss_parts(q, gamma, actions, nt, term)
    return (nt_sum + t_sum) / total


def _partition_losses(ensemble, gamma, actions, nt, term):
    """Per-predictor mean losses for each partition, as two (k,) arrays."""
    lnt = np.zeros(len(ensemble))
    lt = np.zeros(len(ensemble))
    for j, q in enumerate(ensemble):
        nt_sum, t_sum = _loss_parts(q, gamma, actions, nt, term)
        if nt is not None and len(nt[2]):
            lnt[j] = nt_sum / len(nt[2])
        if term is not None and len(term[2]):
            lt[j] = t_sum / len(term[2])
    return lnt, lt


def bellman_match_objective(train: OfflineRLDataset, syn: SyntheticOfflineDataset,
                            ensemble, gamma: float, actions=None) -> float:
    """Sum over the ensemble of squared per-partition Bellman loss differences.

    The terminated and non-terminated partitions are matched separately and
    their objectives summed.
    """
    actions = _action_set(train, actions)
    tr_nt, tr_t = _as_blocks(train, actions)
    sy_nt, sy_t = _as_blocks(syn, actions)
    if isinstance(syn, SyntheticOfflineDataset) and syn.ratio is not None:
        got = (0 if tr_nt is None else len(tr_nt[2]), 0 if tr_t is None else len(tr_t[2]))
        if tuple(syn.ratio) != got:
            raise ValueError(f"ratio metadata {syn.ratio} does not match training "
                             f"partition sizes {got}")
    if (tr_nt is None) != (sy_nt is None) or (tr_t is None) != (sy_t is None):
        raise ValueError("terminated/non-terminated partitions do not line up")
    lnt_tr, lt_tr = _partition_losses(ensemble, gamma, actions, tr_nt, tr_t)
    lnt_sy, lt_sy = _partition_losses(ensemble, gamma, actions, sy_nt, sy_t)
    return float(np.sum((lnt_tr - lnt_sy) ** 2) + np.sum((lt_tr - lt_sy) ** 2))


# -- gradients of the matching objective w.r.t. synthetic coordinates ----------


def _predictor_input_grads(predictor, states, action_vectors):
    """d f / d input over rows; returns (m, d0) state part and (m, A) action part."""
    fmap = predictor.fmap
    d0 = fmap.state_dim
    if isinstance(predictor, NeuralQ):
        X = np.hstack([np.atleast_2d(states), np.atleast_2d(action_vectors)])
        g = input_grad_batch(predictor.net, X)
        return g[:, :d0], g[:, d0:]
    # linear: gradients are constant rows M1^T v and M2^T v
    m = len(np.atleast_2d(states))
    gs = np.tile(fmap.phi1(np.eye(d0)) @ predictor.v, (m, 1))
    ga = np.tile(fmap.phi2(np.eye(fmap.action_count)) @ predictor.v, (m, 1))
    return gs, ga


def _objective_and_gradient(syn: SyntheticOfflineDataset, ensemble, gamma, actions,
                            lnt_tr, lt_tr) -> tuple[float, dict]:
    """Matching objective and its gradient, sharing one forward pass.

    `lnt_tr`/`lt_tr` are the precomputed per-predictor training losses (the
    training side is constant during optimization).
    """
    grads = {
        "nt_s": np.zeros_like(syn.nt_s), "nt_a": np.zeros_like(syn.nt_a),
        "nt_r": np.zeros_like(syn.nt_r), "nt_sn": np.zeros_like(syn.nt_sn),
        "t_s": np.zeros_like(syn.t_s), "t_a": np.zeros_like(syn.t_a),
        "t_r": np.zeros_like(syn.t_r),
    }
    m_nt, m_t = len(syn.nt_r), len(syn.t_r)
    obj = 0.0

    for j, q in enumerate(ensemble):
        if m_nt:
            s, a, r, sn = syn.nt_s, syn.nt_a, syn.nt_r, syn.nt_sn
            vmax, amax = _max_over_actions(q.predictor, sn, actions)
            u = q.predictor.values(s, a) - q.lam * r - gamma * vmax
            diff = float(np.mean(u * u)) - lnt_tr[j]
            obj += diff * diff
            coeff = 2.0 * diff * (2.0 / m_nt)
            gs, ga = _predictor_input_grads(q.predictor, s, a)
            grads["nt_s"] += coeff * u[:, None] * gs
            grads["nt_a"] += coeff * u[:, None] * ga
            grads["nt_r"] += coeff * u * (-q.lam)
            # next-state grad flows through the argmax action branch only
            fmap = q.predictor.fmap
            gsn = np.zeros_like(sn)
            for ai, act in enumerate(actions):
                mask = amax == ai
                if not np.any(mask):
                    continue
                onehot = fmap.onehot(np.full(int(mask.sum()), act, dtype=int))
                g_state, _ = _predictor_input_grads(q.predictor, sn[mask], onehot)
                gsn[mask] = g_state
            grads["nt_sn"] += coeff * (-gamma) * u[:, None] * gsn
        if m_t:
            s, a, r = syn.t_s, syn.t_a, syn.t_r
            w = q.predictor.values(s, a) - q.lam * r
            diff = float(np.mean(w * w)) - lt_tr[j]
            obj += diff * diff
            coeff = 2.0 * diff * (2.0 / m_t)
            gs, ga = _predictor_input_grads(q.predictor, s, a)
            grads["t_s"] += coeff * w[:, None] * gs
            grads["t_a"] += coeff * w[:, None] * ga
            grads["t_r"] += coeff * w * (-q.lam)
    return obj, grads


def bellman_objective_gradient(train: OfflineRLDataset, syn: SyntheticOfflineDataset,
                               ensemble, gamma: float, actions=None) -> dict:
    """Analytic gradient of bellman_match_objective w.r.t. every synthetic field.

    Returns arrays keyed like the synthetic dataset blocks. The max term uses
    its argmax branch (ties to the lowest action index) as subgradient.
    """
    actions = _action_set(train, actions)
    tr_nt, tr_t = _as_blocks(train, actions)
    lnt_tr, lt_tr = _partition_losses(ensemble, gamma, actions, tr_nt, tr_t)
    _, grads = _objective_and_gradient(syn, ensemble, gamma, actions, lnt_tr, lt_tr)
    return grads


# -- decomposable feature-map machinery ----------------------------------------


def decomposable_max_identity_check(v, s_next, actions, fmap) -> bool:
    """Check max_a v.phi(s',a) == v.phi1(s') + max_a v.phi2(a) to 1e-10.

    `fmap` may be a FeatureMap or a (phi, phi1, phi2) triple of callables on
    (states, onehot) / states / onehot for probing arbitrary feature maps.
    """
    v = np.asarray(v, dtype=float)
    s_next = np.atleast_2d(s_next)
    actions = list(actions)
    if isinstance(fmap, FeatureMap):
        phi, phi1, phi2 = fmap.phi, fmap.phi1, fmap.phi2
        onehot = fmap.onehot
    else:
        phi, phi1, phi2 = fmap
        nA = len(actions)

        def onehot(idx):
            out = np.zeros((len(idx), nA))
            out[np.arange(len(idx)), np.asarray(idx, dtype=int)] = 1.0
            return out

    m = len(s_next)
    joint = np.stack([phi(s_next, onehot(np.full(m, a, dtype=int))) @ v for a in actions], axis=1)
    lhs = joint.max(axis=1)
    action_part = max(float((phi2(onehot(np.array([a]))) @ v)[0]) for a in actions)
    rhs = phi1(s_next) @ v + action_part
    return bool(np.max(np.abs(lhs - rhs)) <= 1e-10)


def _nt_feature_means(s, a, r, sn, fmap):
    return np.concatenate([
        fmap.phi1(s).mean(axis=0), fmap.phi2(a).mean(axis=0),
        [float(np.mean(r))], fmap.phi1(sn).mean(axis=0)])


def mean_constraint_residual(train, syn: SyntheticOfflineDataset, fmap: FeatureMap) -> np.ndarray:
    """Difference of (phi1(s), phi2(a), r, phi1(s')) means, synthetic minus training.

    Computed over the non-terminated partitions, where the bootstrap term the
    constraint exists to cancel is present.
    """
    if not fmap.decomposable:
        raise ValueError("feature map is not decomposable")
    actions = _action_set(train, None)
    tr_nt, _ = _as_blocks(train, actions)
    if tr_nt is None or len(syn.nt_r) == 0:
        raise ValueError("mean constraint needs non-terminated rows on both sides")
    return (_nt_feature_means(syn.nt_s, syn.nt_a, syn.nt_r, syn.nt_sn, fmap)
            - _nt_feature_means(*tr_nt, fmap))


def _shift_to_match(block: np.ndarray, M: np.ndarray, target_resid: np.ndarray) -> np.ndarray:
    """Constant shift delta with M @ delta = target_resid (least squares)."""
    delta, *_ = np.linalg.lstsq(M, target_resid, rcond=None)
    return block + delta[None, :]


def mean_constraint_project(syn: SyntheticOfflineDataset, train,
                            fmap: FeatureMap) -> SyntheticOfflineDataset:
    """Shift each synthetic block by a constant so the feature means match.

    Rewards are re-clamped to the dataset reward range afterwards, with any
    clamping deficit redistributed equally across unclamped rows; a residual
    that cannot be absorbed stays visible through mean_constraint_residual.
    """
    if not fmap.decomposable:
        raise ValueError("feature map is not decomposable")
    resid = mean_constraint_residual(train, syn, fmap)
    d = fmap.dim
    r_s, r_a, r_r, r_sn = resid[:d], resid[d:2 * d], float(resid[2 * d]), resid[2 * d + 1:]
    out = syn.copy()
    M1 = fmap.phi1(np.eye(fmap.state_dim))  # (state_dim, d): rows are phi1 of basis
    M2 = fmap.phi2(np.eye(fmap.action_count))
    out.nt_s = _shift_to_match(out.nt_s, M1.T, -r_s)
    out.nt_a = _shift_to_match(out.nt_a, M2.T, -r_a)
    out.nt_sn = _shift_to_match(out.nt_sn, M1.T, -r_sn)
    out.nt_r = _clamp_preserving_mean(out.nt_r - r_r, out.reward_range)
    return out


def _clamp_preserving_mean(r: np.ndarray, reward_range) -> np.ndarray:
    lo, hi = reward_range
    target = float(np.mean(r))
    out = np.clip(r, lo, hi)
    for _ in range(64):
        deficit = target - float(np.mean(out))
        if abs(deficit) < 1e-15:
            break
        free = (out < hi - 1e-12) if deficit > 0 else (out > lo + 1e-12)
        if not np.any(free):
            break
        out[free] += deficit * len(out) / int(free.sum())
        out = np.clip(out, lo, hi)
    return out


# -- the distillation loop -------------------------------------------------------


@dataclass
class RLDistillConfig:
    m: int
    k: int = 20
    sigma: float | None = None  # None: 1 for nets, 1/sqrt(d+1) for linear
    gamma: float = 0.99
    lr_grid: tuple = LR_GRID
    max_steps: int = 500
    seed: int = 0
    state_radius: float | None = None  # optional projection for states
    mean_constraint: bool = False  # decomposable fast path (linear maps only)

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def allocate_partition_sizes(m: int, n_nonterm: int, n_term: int) -> tuple[int, int]:
    """Split m across partitions preserving the training ratio.

    Round-half-up on the terminated share; every nonempty training partition
    receives at least one row.
    """
    n = n_nonterm + n_term
    if m > n:
        raise ValueError(f"m={m} exceeds training size n={n}")
    if n_term == 0:
        return m, 0
    if n_nonterm == 0:
        return 0, m
    m_t = _round_half_up(m * n_term / n)
    m_t = min(max(m_t, 1), m - 1)
    return m - m_t, m_t


def _project_state_block(block: np.ndarray, radius: float | None) -> np.ndarray:
    if radius is None or block.size == 0:
        return block
    norms = np.linalg.norm(block, axis=1)
    scale = np.where(norms > radius,
                     np.divide(radius, norms, out=np.ones_like(norms), where=norms > 0), 1.0)
    return block * scale[:, None]


def distill_rl(train: OfflineRLDataset, cfg: RLDistillConfig, arch: PredictorArch,
               rng: np.random.Generator | None = None,
               evaluator=None) -> tuple[SyntheticOfflineDataset, DistillReport]:
    """Optimize a relaxed synthetic offline dataset against sampled predictors.

    One Adam run per learning rate in the grid, from a shared subsample
    initialization; rewards are clamped into the environment reward range
    each step while states stay unconstrained (unless state_radius is set).
    When an evaluator is supplied the candidate with the highest downstream
    mean return wins (ties broken by lower final objective); otherwise the
    lowest final objective wins.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if cfg.m > len(train):
        raise ValueError(f"m={cfg.m} exceeds training size n={len(train)}")

    actions = _action_set(train, None)
    nA = len(actions)
    tr_nt, tr_t = _as_blocks(train, actions)
    n_nt = 0 if tr_nt is None else len(tr_nt[2])
    n_t = 0 if tr_t is None else len(tr_t[2])
    m_nt, m_t = allocate_partition_sizes(cfg.m, n_nt, n_t)

    spec = _SPECS.get(train.env_name)
    reward_range = spec.reward_range if spec else (
        float(min(t.r for t in train.transitions)), float(max(t.r for t in train.transitions)))
    d0 = len(train.transitions[0].s)

    init_seed = int(rng.integers(2**63))
    ens_seed = int(rng.integers(2**63))
    init_rng = np.random.default_rng(init_seed)

    def subsample(block, size):
        idx = init_rng.choice(len(block[2]), size=size, replace=False)
        return [np.asarray(b)[idx].astype(float).copy() for b in block]

    if m_nt:
        nt0 = subsample(tr_nt, m_nt)
    else:
        nt0 = [np.zeros((0, d0)), np.zeros((0, nA)), np.zeros(0), np.zeros((0, d0))]
    if m_t:
        t0 = subsample(tr_t, m_t)
    else:
        t0 = [np.zeros((0, d0)), np.zeros((0, nA)), np.zeros(0)]

    ensemble = sample_ensemble_H(arch, cfg.k, cfg.sigma, ens_seed)
    base = SyntheticOfflineDataset(train.env_name, cfg.gamma, reward_range,
                                   *nt0, *t0, ratio=(n_nt, n_t))

    lnt_tr, lt_tr = _partition_losses(ensemble, cfg.gamma, actions, tr_nt, tr_t)

    per_lr = []
    candidates = []
    for lr in cfg.lr_grid:
        syn = base.copy()
        params = {k: getattr(syn, k) for k in
                  ("nt_s", "nt_a", "nt_r", "nt_sn", "t_s", "t_a", "t_r")}
        state = AdamState()
        trace = []
        for _ in range(cfg.max_steps):
            obj, grads = _objective_and_gradient(syn, ensemble, cfg.gamma, actions,
                                                 lnt_tr, lt_tr)
            trace.append(obj)
            params, state = adam_update(params, grads, state, lr)
            params["nt_r"] = np.clip(params["nt_r"], *reward_range)
            params["t_r"] = np.clip(params["t_r"], *reward_range)
            if cfg.state_radius is not None:
                for key in ("nt_s", "nt_sn", "t_s"):
                    params[key] = _project_state_block(params[key], cfg.state_radius)
            for k, vals in params.items():
                setattr(syn, k, vals)
            if cfg.mean_constraint:
                if arch.kind != "linear":
                    raise ValueError("mean_constraint requires linear predictors")
                syn = mean_constraint_project(syn, train, arch.fmap)
                params = {k: getattr(syn, k) for k in params}
        final_obj, _ = _objective_and_gradient(syn, ensemble, cfg.gamma, actions,
                                               lnt_tr, lt_tr)
        trace.append(final_obj)
        candidates.append(syn)
        per_lr.append({"lr": lr, "final_objective": final_obj,
                       "objective_trace": trace})

    if evaluator is not None:
        for entry, syn in zip(per_lr, candidates):
            entry["eval"] = evaluator(syn)
        best = min(range(len(per_lr)),
                   key=lambda i: (-per_lr[i]["eval"]["mean"], per_lr[i]["final_objective"], i))
    else:
        best = min(range(len(per_lr)), key=lambda i: (per_lr[i]["final_objective"], i))

    chosen = candidates[best]
    report = DistillReport(
        kind="rl-distill",
        config={"m": cfg.m, "k": cfg.k, "sigma": cfg.sigma, "gamma": cfg.gamma,
                "lr_grid": list(cfg.lr_grid), "max_steps": cfg.max_steps,
                "mean_constraint": cfg.mean_constraint,
                "arch": {"kind": arch.kind, "hidden": list(arch.hidden)},
                "partition_sizes": [m_nt, m_t]},
        seeds={"config": cfg.seed, "init": init_seed, "ensemble": ens_seed},
        traces={"per_lr": per_lr},
        result={"chosen_lr": per_lr[best]["lr"],
                "chosen_eval": per_lr[best].get("eval"),
                "final_objective": per_lr[best]["final_objective"],
                "synthetic": chosen.to_jsonable()},
    )
    return chosen, report
