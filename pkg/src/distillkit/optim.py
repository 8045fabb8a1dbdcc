"""Adam optimizer over dicts of named numpy arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second moment accumulators plus step counter.

    Accumulators are created lazily on the first update so the state can be
    constructed without knowing parameter shapes.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_update(params: dict, grads: dict, state: AdamState, lr: float) -> tuple[dict, AdamState]:
    """One Adam step with bias correction. Mutates and returns params/state.

    `params` and `grads` are dicts mapping names to arrays of equal shape.
    """
    if set(params) != set(grads):
        raise ValueError(f"param/grad keys differ: {set(params) ^ set(grads)}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        p = params[name]
        if np.shape(p) != np.shape(g):
            raise ValueError(f"shape mismatch for {name!r}: {np.shape(p)} vs {np.shape(g)}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p, dtype=float)
            state.v[name] = np.zeros_like(p, dtype=float)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / (1.0 - b1**t)
        v_hat = state.v[name] / (1.0 - b2**t)
        params[name] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
