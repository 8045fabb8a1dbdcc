"""Adversarial construction defeating any small set of homogeneous regressors.

Given T < q(q+1)/2 regressors in R^q, there is a nonzero symmetric matrix A
whose quadratic form vanishes on all of them. Training data with identity
second moments and synthetic data with second moments I + A then give every
supplied regressor identical losses, while the top eigenvector of A sees a
loss gap of exactly 1/(4 q^2) once A is scaled to operator norm 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass
class SymmetricWitness:
    A: np.ndarray  # symmetric q x q, operator norm 1/2
    operator_norm: float


@dataclass
class CounterexampleBundle:
    d_train: np.ndarray  # (q, q) homogeneous points, rows
    d_syn: np.ndarray  # (q, q) homogeneous points, rows
    f0: np.ndarray  # unit vector, the distinguishing regressor
    gap: float


def _sym_to_vec(S: np.ndarray) -> np.ndarray:
    """Isometric vectorization: Frobenius inner products become dot products."""
    q = S.shape[0]
    iu = np.triu_indices(q)
    factor = np.where(iu[0] == iu[1], 1.0, SQRT2)
    return S[iu] * factor


def _vec_to_sym(w: np.ndarray, q: int) -> np.ndarray:
    iu = np.triu_indices(q)
    factor = np.where(iu[0] == iu[1], 1.0, SQRT2)
    S = np.zeros((q, q))
    S[iu] = w / factor
    return S + np.triu(S, 1).T


def null_symmetric(regressors) -> SymmetricWitness:
    """Nonzero symmetric matrix orthogonal to every v v^T, operator norm 1/2."""
    V = np.atleast_2d(np.asarray(regressors, dtype=float))
    T, q = V.shape
    if q < 1:
        raise ValueError("regressor list must carry the dimension; pass an empty (0, q) array")
    dim = q * (q + 1) // 2
    if T >= dim:
        raise ValueError(f"no witness guaranteed: T={T} >= q(q+1)/2={dim}")
    if T == 0:
        w = np.zeros(dim)
        w[0] = 1.0
    else:
        C = np.stack([_sym_to_vec(np.outer(v, v)) for v in V])
        _, s, vt = np.linalg.svd(C, full_matrices=True)
        # with T < dim the trailing right-singular vectors span the null space
        w = vt[-1]
        if float(np.linalg.norm(C @ w)) > 1e-8:
            raise RuntimeError("null space numerically empty despite T < q(q+1)/2")
    A = _vec_to_sym(w, q)
    top = float(np.max(np.abs(np.linalg.eigvalsh(A))))
    A = A * (0.5 / top)
    return SymmetricWitness(A=A, operator_norm=0.5)


def construct_counterexample(witness: SymmetricWitness) -> CounterexampleBundle:
    """Training basis vectors vs synthetic factor of I + A, plus the witness regressor."""
    A = witness.A
    q = A.shape[0]
    d_train = np.eye(q)
    vals, vecs = np.linalg.eigh(np.eye(q) + A)
    d_syn = np.sqrt(np.clip(vals, 0.0, None))[:, None] * vecs.T
    avals, avecs = np.linalg.eigh(A)
    f0 = avecs[:, int(np.argmax(np.abs(avals)))]
    quad = float(f0 @ A @ f0)
    return CounterexampleBundle(d_train=d_train, d_syn=d_syn, f0=f0,
                                gap=(quad * quad) / q**2)


def _loss(points: np.ndarray, v: np.ndarray) -> float:
    res = points @ v
    return float(np.mean(res * res))


def verify(bundle: CounterexampleBundle, regressors) -> dict:
    """Check loss equality on the supplied regressors and the gap on f0."""
    V = np.atleast_2d(np.asarray(regressors, dtype=float))
    q = bundle.d_train.shape[1]
    devs = [
        (_loss(bundle.d_train, v) - _loss(bundle.d_syn, v)) ** 2
        for v in V
    ] or [0.0]
    gap = (_loss(bundle.d_train, bundle.f0) - _loss(bundle.d_syn, bundle.f0)) ** 2
    max_dev = float(max(devs))
    threshold = 1.0 / (4.0 * q * q) - 1e-9
    return {
        "q": q,
        "max_equal_dev": max_dev,
        "gap": gap,
        "pass": bool(max_dev <= 1e-9 and gap >= threshold),
    }
