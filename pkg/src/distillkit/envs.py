"""Deterministic classic-control environments and offline data collection.

Dynamics, constants and reset distributions follow the canonical public
definitions of CartPole, MountainCar and Acrobot (Euler, Euler, RK4). Step
functions are pure; the Env wrapper adds episode bookkeeping (truncation is
tracked separately from termination and never sets the terminated flag).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminated: bool
    truncated: bool


@dataclass
class OfflineRLDataset:
    transitions: list
    gamma: float
    env_name: str

    def __post_init__(self):
        if not self.transitions:
            raise ValueError("dataset must be nonempty")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")

    def __len__(self) -> int:
        return len(self.transitions)

    def arrays(self):
        """Stacked (S, A, R, S_next, terminated) arrays."""
        S = np.stack([t.s for t in self.transitions])
        A = np.array([t.a for t in self.transitions], dtype=int)
        R = np.array([t.r for t in self.transitions], dtype=float)
        SN = np.stack([t.s_next for t in self.transitions])
        T = np.array([t.terminated for t in self.transitions], dtype=bool)
        return S, A, R, SN, T

    def split_terminated(self):
        term = [t for t in self.transitions if t.terminated]
        nonterm = [t for t in self.transitions if not t.terminated]
        return nonterm, term


@dataclass
class EnvSpec:
    name: str
    state_dim: int
    action_count: int
    max_episode_steps: int
    reward_range: tuple


CARTPOLE_SPEC = EnvSpec("cartpole", 4, 2, 500, (1.0, 1.0))
MOUNTAINCAR_SPEC = EnvSpec("mountaincar", 2, 3, 200, (-1.0, -1.0))
ACROBOT_SPEC = EnvSpec("acrobot", 6, 3, 500, (-1.0, 0.0))

_SPECS = {s.name: s for s in (CARTPOLE_SPEC, MOUNTAINCAR_SPEC, ACROBOT_SPEC)}


def _check_finite(state):
    if not np.all(np.isfinite(state)):
        raise ValueError(f"non-finite state {state}")


# -- cartpole ---------------------------------------------------------------

_CP_GRAVITY = 9.8
_CP_MASSCART = 1.0
_CP_MASSPOLE = 0.1
_CP_TOTAL = _CP_MASSCART + _CP_MASSPOLE
_CP_LENGTH = 0.5  # half pole length
_CP_PM_LENGTH = _CP_MASSPOLE * _CP_LENGTH
_CP_FORCE = 10.0
_CP_TAU = 0.02
_CP_THETA_LIMIT = 12.0 * math.pi / 180.0
_CP_X_LIMIT = 2.4


def cartpole_step(state, action):
    """One Euler step of cart-pole dynamics; reward +1 always."""
    _check_finite(state)
    x, x_dot, theta, theta_dot = (float(v) for v in state)
    force = _CP_FORCE if action == 1 else -_CP_FORCE
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    temp = (force + _CP_PM_LENGTH * theta_dot**2 * sin_t) / _CP_TOTAL
    theta_acc = (_CP_GRAVITY * sin_t - cos_t * temp) / (
        _CP_LENGTH * (4.0 / 3.0 - _CP_MASSPOLE * cos_t**2 / _CP_TOTAL))
    x_acc = temp - _CP_PM_LENGTH * theta_acc * cos_t / _CP_TOTAL
    new = np.array([
        x + _CP_TAU * x_dot,
        x_dot + _CP_TAU * x_acc,
        theta + _CP_TAU * theta_dot,
        theta_dot + _CP_TAU * theta_acc,
    ])
    terminated = abs(new[0]) > _CP_X_LIMIT or abs(new[2]) > _CP_THETA_LIMIT
    return new, 1.0, terminated


# -- mountain car -----------------------------------------------------------

_MC_MIN_POS, _MC_MAX_POS = -1.2, 0.6
_MC_MAX_SPEED = 0.07
_MC_GOAL = 0.5
_MC_FORCE = 0.001
_MC_GRAVITY = 0.0025


def mountaincar_step(state, action):
    """One step of mountain-car dynamics; reward -1 always."""
    _check_finite(state)
    pos, vel = float(state[0]), float(state[1])
    vel += (action - 1) * _MC_FORCE - math.cos(3.0 * pos) * _MC_GRAVITY
    vel = min(max(vel, -_MC_MAX_SPEED), _MC_MAX_SPEED)
    pos += vel
    pos = min(max(pos, _MC_MIN_POS), _MC_MAX_POS)
    if pos == _MC_MIN_POS and vel < 0.0:
        vel = 0.0
    return np.array([pos, vel]), -1.0, pos >= _MC_GOAL


# -- acrobot ----------------------------------------------------------------

_AB_DT = 0.2
_AB_L1 = 1.0
_AB_M1 = _AB_M2 = 1.0
_AB_LC1 = _AB_LC2 = 0.5
_AB_I1 = _AB_I2 = 1.0
_AB_G = 9.8
_AB_MAX_VEL1 = 4.0 * math.pi
_AB_MAX_VEL2 = 9.0 * math.pi
_AB_TORQUES = (-1.0, 0.0, 1.0)


def _acrobot_dsdt(s_aug):
    theta1, theta2, dtheta1, dtheta2, torque = s_aug
    d1 = (_AB_M1 * _AB_LC1**2 + _AB_M2 *
          (_AB_L1**2 + _AB_LC2**2 + 2 * _AB_L1 * _AB_LC2 * math.cos(theta2)) + _AB_I1 + _AB_I2)
    d2 = _AB_M2 * (_AB_LC2**2 + _AB_L1 * _AB_LC2 * math.cos(theta2)) + _AB_I2
    phi2 = _AB_M2 * _AB_LC2 * _AB_G * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (-_AB_M2 * _AB_L1 * _AB_LC2 * dtheta2**2 * math.sin(theta2)
            - 2 * _AB_M2 * _AB_L1 * _AB_LC2 * dtheta2 * dtheta1 * math.sin(theta2)
            + (_AB_M1 * _AB_LC1 + _AB_M2 * _AB_L1) * _AB_G * math.cos(theta1 - math.pi / 2.0)
            + phi2)
    ddtheta2 = ((torque + d2 / d1 * phi1
                 - _AB_M2 * _AB_L1 * _AB_LC2 * dtheta1**2 * math.sin(theta2) - phi2)
                / (_AB_M2 * _AB_LC2**2 + _AB_I2 - d2**2 / d1))
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return np.array([dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0])


def _wrap(x, lo, hi):
    width = hi - lo
    while x > hi:
        x -= width
    while x < lo:
        x += width
    return x


def acrobot_step(state, action):
    """One RK4 step of acrobot dynamics on the internal 4-vector.

    Returns (next_state, reward, terminated); reward is -1 per step and 0 on
    the terminating step. Use acrobot_observation for the 6-d observation.
    """
    _check_finite(state)
    s_aug = np.append(np.asarray(state, dtype=float), _AB_TORQUES[action])
    dt = _AB_DT
    k1 = _acrobot_dsdt(s_aug)
    k2 = _acrobot_dsdt(s_aug + dt / 2.0 * k1)
    k3 = _acrobot_dsdt(s_aug + dt / 2.0 * k2)
    k4 = _acrobot_dsdt(s_aug + dt * k3)
    ns = (s_aug + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))[:4]
    ns[0] = _wrap(ns[0], -math.pi, math.pi)
    ns[1] = _wrap(ns[1], -math.pi, math.pi)
    ns[2] = min(max(ns[2], -_AB_MAX_VEL1), _AB_MAX_VEL1)
    ns[3] = min(max(ns[3], -_AB_MAX_VEL2), _AB_MAX_VEL2)
    terminated = -math.cos(ns[0]) - math.cos(ns[1] + ns[0]) > 1.0
    return ns, (0.0 if terminated else -1.0), terminated


def acrobot_observation(state) -> np.ndarray:
    t1, t2, dt1, dt2 = (float(v) for v in state)
    return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), dt1, dt2])


# -- stateful wrapper ---------------------------------------------------------


class Env:
    """Episode bookkeeping over the pure step functions.

    step() returns (obs, reward, terminated, truncated); observations equal
    the internal state except for acrobot's trig embedding.
    """

    def __init__(self, name: str):
        if name not in _SPECS:
            raise ValueError(f"unknown environment {name!r}")
        self.spec = _SPECS[name]
        self._state = None
        self._steps = 0

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        name = self.spec.name
        if name == "cartpole":
            self._state = rng.uniform(-0.05, 0.05, size=4)
        elif name == "mountaincar":
            self._state = np.array([rng.uniform(-0.6, -0.4), 0.0])
        else:
            self._state = rng.uniform(-0.1, 0.1, size=4)
        self._steps = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        if self.spec.name == "acrobot":
            return acrobot_observation(self._state)
        return self._state.copy()

    @property
    def state(self) -> np.ndarray:
        return self._state.copy()

    def step(self, action: int):
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        if not 0 <= action < self.spec.action_count:
            raise ValueError(f"action {action} out of range")
        name = self.spec.name
        if name == "cartpole":
            self._state, r, term = cartpole_step(self._state, action)
        elif name == "mountaincar":
            self._state, r, term = mountaincar_step(self._state, action)
        else:
            self._state, r, term = acrobot_step(self._state, action)
        self._steps += 1
        trunc = not term and self._steps >= self.spec.max_episode_steps
        return self.observe(), r, term, trunc


def make_env(name: str) -> Env:
    return Env(name)


# -- offline data collection --------------------------------------------------


def _collect(env: Env, policy, n_transitions: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    out = []
    obs = env.reset(int(rng.integers(2**31)))
    while len(out) < n_transitions:
        a = policy(obs, rng)
        obs_next, r, term, trunc = env.step(a)
        out.append(Transition(obs, a, r, obs_next, term, trunc))
        if term or trunc:
            obs = env.reset(int(rng.integers(2**31)))
        else:
            obs = obs_next
    return out


def collect_random(env: Env, n_transitions: int, seed: int, gamma: float = 0.99) -> OfflineRLDataset:
    """Exactly n transitions under uniform random actions."""
    if n_transitions < 1:
        raise ValueError("n_transitions must be >= 1")
    nA = env.spec.action_count
    trans = _collect(env, lambda obs, rng: int(rng.integers(nA)), n_transitions, seed)
    return OfflineRLDataset(trans, gamma, env.spec.name)


def collect_policy(env: Env, policy, n_transitions: int, seed: int,
                   gamma: float = 0.99) -> OfflineRLDataset:
    """Exactly n transitions under a deterministic state->action policy."""
    trans = _collect(env, lambda obs, rng: int(policy(obs)), n_transitions, seed)
    return OfflineRLDataset(trans, gamma, env.spec.name)


def merge_datasets(a: OfflineRLDataset, b: OfflineRLDataset) -> OfflineRLDataset:
    if a.env_name != b.env_name or a.gamma != b.gamma:
        raise ValueError("datasets disagree on environment or gamma")
    return OfflineRLDataset(a.transitions + b.transitions, a.gamma, a.env_name)


# -- tabular mountain-car expert ----------------------------------------------


@dataclass
class TabularPolicy:
    """Greedy policy over a discretized (position, velocity) Q-table."""

    q: np.ndarray  # (bins_p, bins_v, 3)
    bins: tuple
    success_rate: float = 1.0
    warning: str | None = None

    def cell(self, obs) -> tuple:
        bp, bv = self.bins
        i = int(np.clip((obs[0] - _MC_MIN_POS) / (_MC_MAX_POS - _MC_MIN_POS) * bp, 0, bp - 1))
        j = int(np.clip((obs[1] + _MC_MAX_SPEED) / (2 * _MC_MAX_SPEED) * bv, 0, bv - 1))
        return i, j

    def __call__(self, obs) -> int:
        i, j = self.cell(obs)
        return int(np.argmax(self.q[i, j]))


def train_tabular_expert_mountaincar(bins=(40, 40), episodes: int = 20000,
                                     seed: int = 0) -> TabularPolicy:
    """Epsilon-greedy tabular Q-learning on a uniform (position, velocity) grid.

    Epsilon decays linearly 1.0 -> 0.05, learning rate 0.1, gamma 0.99. The
    returned greedy policy is evaluated on 10 held-out resets; if fewer than
    8 reach the goal within the step limit a warning is recorded on the
    policy instead of failing.
    """
    if bins[0] < 10 or bins[1] < 10:
        raise ValueError(f"bins must be at least (10, 10), got {bins}")
    rng = np.random.default_rng(seed)
    env = make_env("mountaincar")
    bp, bv = bins
    q = np.zeros((bp, bv, 3))
    policy = TabularPolicy(q, bins)
    lr, gamma = 0.1, 0.99
    eps_hi, eps_lo = 1.0, 0.05
    max_steps = MOUNTAINCAR_SPEC.max_episode_steps
    pos_scale = bp / (_MC_MAX_POS - _MC_MIN_POS)
    vel_scale = bv / (2 * _MC_MAX_SPEED)
    # the environment dynamics are inlined on plain floats here; the tight
    # loop runs for millions of steps and per-step array overhead dominates
    for ep in range(episodes):
        eps = eps_hi + (eps_lo - eps_hi) * (ep / max(episodes - 1, 1))
        pos = float(rng.uniform(-0.6, -0.4))
        vel = 0.0
        i = min(int((pos - _MC_MIN_POS) * pos_scale), bp - 1)
        j = min(int((vel + _MC_MAX_SPEED) * vel_scale), bv - 1)
        for _ in range(max_steps):
            a = int(rng.integers(3)) if rng.random() < eps else int(np.argmax(q[i, j]))
            vel += (a - 1) * _MC_FORCE - math.cos(3.0 * pos) * _MC_GRAVITY
            vel = min(max(vel, -_MC_MAX_SPEED), _MC_MAX_SPEED)
            pos += vel
            pos = min(max(pos, _MC_MIN_POS), _MC_MAX_POS)
            if pos == _MC_MIN_POS and vel < 0.0:
                vel = 0.0
            term = pos >= _MC_GOAL
            i2 = min(int((pos - _MC_MIN_POS) * pos_scale), bp - 1)
            j2 = min(int((vel + _MC_MAX_SPEED) * vel_scale), bv - 1)
            cell = q[i, j]
            target = -1.0 if term else -1.0 + gamma * float(q[i2, j2].max())
            cell[a] += lr * (target - cell[a])
            i, j = i2, j2
            if term:
                break
    successes = 0
    for es in range(10):
        obs = env.reset(1_000_000 + es)
        for _ in range(MOUNTAINCAR_SPEC.max_episode_steps):
            obs, _, term, trunc = env.step(policy(obs))
            if term:
                successes += 1
                break
            if trunc:
                break
    policy.success_rate = successes / 10.0
    if successes < 8:
        policy.warning = (f"expert reached the goal in only {successes}/10 evaluations; "
                          "budget may be too small")
    return policy


# -- dataset file format -------------------------------------------------------

def dataset_to_csv(ds: OfflineRLDataset) -> str:
    """CSV with header s0..s{D-1},a,r,sn0..sn{D-1},terminated,truncated."""
    dim = len(ds.transitions[0].s)
    header = ([f"s{i}" for i in range(dim)] + ["a", "r"]
              + [f"sn{i}" for i in range(dim)] + ["terminated", "truncated"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for t in ds.transitions:
        w.writerow([repr(float(v)) for v in t.s] + [t.a, repr(float(t.r))]
                   + [repr(float(v)) for v in t.s_next]
                   + [int(t.terminated), int(t.truncated)])
    return buf.getvalue()


def dataset_from_csv(text: str, gamma: float, env_name: str) -> OfflineRLDataset:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    dim = sum(1 for h in header if h.startswith("s") and not h.startswith("sn"))
    trans = []
    for row in rows[1:]:
        if not row:
            continue
        s = np.array([float(v) for v in row[:dim]])
        a = int(row[dim])
        r = float(row[dim + 1])
        sn = np.array([float(v) for v in row[dim + 2:2 * dim + 2]])
        term = bool(int(row[2 * dim + 2]))
        trunc = bool(int(row[2 * dim + 3]))
        trans.append(Transition(s, a, r, sn, term, trunc))
    return OfflineRLDataset(trans, gamma, env_name)


def save_dataset(ds: OfflineRLDataset, path) -> None:
    Path(path).write_text(dataset_to_csv(ds))


def load_dataset(path, gamma: float, env_name: str) -> OfflineRLDataset:
    return dataset_from_csv(Path(path).read_text(), gamma, env_name)
