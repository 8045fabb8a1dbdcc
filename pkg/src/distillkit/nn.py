"""Two-hidden-layer ReLU network with analytic gradients, plus feature maps.

The network is w_out . relu(W2 relu(W1 x + b1) + b2) + b_out with a scalar
head. Weight gradients (for fitted-Q regression) and input gradients (for
synthetic-data optimization through fixed nets) are both closed form; the
ReLU subgradient at 0 is taken to be 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import AdamState, adam_update  # noqa: F401  (re-exported)


@dataclass
class MLP2:
    W1: np.ndarray  # (h1, in)
    b1: np.ndarray  # (h1,)
    W2: np.ndarray  # (h2, h1)
    b2: np.ndarray  # (h2,)
    w_out: np.ndarray  # (h2,)
    b_out: float

    @property
    def in_dim(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2,
                "w_out": self.w_out, "b_out": np.asarray(self.b_out, dtype=float)}

    @staticmethod
    def from_params(p: dict) -> "MLP2":
        return MLP2(p["W1"], p["b1"], p["W2"], p["b2"], p["w_out"], float(p["b_out"]))

    def to_jsonable(self) -> dict:
        return {"sizes": [self.in_dim, len(self.b1), len(self.b2)],
                "W1": self.W1.tolist(), "b1": self.b1.tolist(),
                "W2": self.W2.tolist(), "b2": self.b2.tolist(),
                "w_out": self.w_out.tolist(), "b_out": float(self.b_out)}

    @staticmethod
    def from_jsonable(d: dict) -> "MLP2":
        return MLP2(np.array(d["W1"], dtype=float), np.array(d["b1"], dtype=float),
                    np.array(d["W2"], dtype=float), np.array(d["b2"], dtype=float),
                    np.array(d["w_out"], dtype=float), float(d["b_out"]))


def mlp_init_gaussian(sizes, rng: np.random.Generator, scale: float = 1.0) -> MLP2:
    """All weights and biases iid N(0, scale^2). sizes = (in, h1, h2)."""
    d_in, h1, h2 = sizes
    if min(d_in, h1, h2) < 1:
        raise ValueError(f"sizes must be positive, got {sizes}")
    return MLP2(
        W1=scale * rng.standard_normal((h1, d_in)),
        b1=scale * rng.standard_normal(h1),
        W2=scale * rng.standard_normal((h2, h1)),
        b2=scale * rng.standard_normal(h2),
        w_out=scale * rng.standard_normal(h2),
        b_out=scale * float(rng.standard_normal()),
    )


def _forward_cached(net: MLP2, X: np.ndarray):
    z1 = X @ net.W1.T + net.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ net.W2.T + net.b2
    a2 = np.maximum(z2, 0.0)
    y = a2 @ net.w_out + net.b_out
    return y, (X, z1, a1, z2, a2)


def mlp_forward(net: MLP2, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.in_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.in_dim},)")
    y, _ = _forward_cached(net, x[None, :])
    return float(y[0])


def forward_batch(net: MLP2, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != net.in_dim:
        raise ValueError(f"batch has width {X.shape[1]}, expected {net.in_dim}")
    y, _ = _forward_cached(net, X)
    return y


def mlp_grad_weights(net: MLP2, batch) -> dict:
    """Gradient of mean squared error over the batch w.r.t. all parameters.

    `batch` is either a list of (x, target) pairs or an (X, targets) tuple.
    """
    if isinstance(batch, tuple) and len(batch) == 2:
        X, targets = batch
    else:
        if len(batch) == 0:
            raise ValueError("batch must be nonempty")
        X = np.stack([np.asarray(x, dtype=float) for x, _ in batch])
        targets = np.array([t for _, t in batch], dtype=float)
    X = np.asarray(X, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    if X.shape[1] != net.in_dim:
        raise ValueError(f"batch has width {X.shape[1]}, expected {net.in_dim}")
    y, (X, z1, a1, z2, a2) = _forward_cached(net, X)
    dy = 2.0 * (y - targets) / len(targets)
    dz2 = np.outer(dy, net.w_out) * (z2 > 0)
    dz1 = (dz2 @ net.W2) * (z1 > 0)
    return {
        "W1": dz1.T @ X, "b1": dz1.sum(axis=0),
        "W2": dz2.T @ a1, "b2": dz2.sum(axis=0),
        "w_out": a2.T @ dy, "b_out": np.asarray(dy.sum()),
    }


def input_grad_batch(net: MLP2, X: np.ndarray) -> np.ndarray:
    """d net(x)/dx for every row of X, shape (m, in)."""
    X = np.asarray(X, dtype=float)
    _, (_, z1, _, z2, _) = _forward_cached(net, X)
    g2 = net.w_out[None, :] * (z2 > 0)
    g1 = (g2 @ net.W2) * (z1 > 0)
    return g1 @ net.W1


def mlp_grad_input(net: MLP2, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.in_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.in_dim},)")
    return input_grad_batch(net, x[None, :])[0]


@dataclass
class FeatureMap:
    """State-action feature map.

    concat_onehot places the state in the leading block and the (one-hot or
    relaxed) action vector in the trailing block, which is an additive
    decomposition phi1(s) + phi2(a) with linear phi1, phi2.
    decomposable_linear uses explicit matrices M1 (d x state_dim) and
    M2 (d x action_count).
    """

    mode: str
    action_count: int
    state_dim: int
    M1: np.ndarray | None = None
    M2: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("concat_onehot", "decomposable_linear"):
            raise ValueError(f"unknown feature map mode {self.mode!r}")
        if self.mode == "decomposable_linear":
            if self.M1 is None or self.M2 is None:
                raise ValueError("decomposable_linear needs M1 and M2")
            self.M1 = np.asarray(self.M1, dtype=float)
            self.M2 = np.asarray(self.M2, dtype=float)
            if self.M1.shape[0] != self.M2.shape[0]:
                raise ValueError("M1 and M2 must share the output dimension")

    @property
    def dim(self) -> int:
        if self.mode == "concat_onehot":
            return self.state_dim + self.action_count
        return self.M1.shape[0]

    @property
    def decomposable(self) -> bool:
        return True  # both supported modes are additive with linear parts

    def onehot(self, actions) -> np.ndarray:
        out = np.zeros((len(actions), self.action_count))
        out[np.arange(len(actions)), np.asarray(actions, dtype=int)] = 1.0
        return out

    def phi1(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        if self.mode == "concat_onehot":
            return np.hstack([states, np.zeros((len(states), self.action_count))])
        return states @ self.M1.T

    def phi2(self, action_vectors: np.ndarray) -> np.ndarray:
        """Action part; takes relaxed (or one-hot) action vectors."""
        av = np.atleast_2d(action_vectors)
        if self.mode == "concat_onehot":
            return np.hstack([np.zeros((len(av), self.state_dim)), av])
        return av @ self.M2.T

    def phi(self, states: np.ndarray, action_vectors: np.ndarray) -> np.ndarray:
        return self.phi1(states) + self.phi2(action_vectors)
