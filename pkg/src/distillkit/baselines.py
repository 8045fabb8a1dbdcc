"""Subsampling baselines and moment-matching reductions for regression data.

Leverage scores are computed on the homogenized point matrix so the label
participates in the importance measure, matching how the distillation
objective sees the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RegressionDataset, dehomogenize, homogenize


@dataclass
class LeverageProfile:
    scores: np.ndarray  # (n,), each in [0, 1], summing to rank
    rank: int


def random_subsample(ds: RegressionDataset, m: int, rng: np.random.Generator) -> RegressionDataset:
    """m rows uniformly without replacement."""
    if not 1 <= m <= ds.n:
        raise ValueError(f"m must be in [1, {ds.n}], got {m}")
    idx = rng.choice(ds.n, size=m, replace=False)
    return ds.take(idx)


def leverage_scores(X: np.ndarray) -> LeverageProfile:
    """Row leverage scores x_i^T (X^T X)^+ x_i via thin SVD.

    Directions with singular value below max(n, p) * sigma_max * 1e-12 are
    treated as numerically null.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise ValueError("X must be a nonempty 2-d matrix")
    u, s, _ = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return LeverageProfile(np.zeros(X.shape[0]), 0)
    tol = max(X.shape) * s[0] * 1e-12
    rank = int(np.sum(s > tol))
    scores = np.sum(u[:, :rank] ** 2, axis=1)
    return LeverageProfile(scores, rank)


def _weighted_sample_without_replacement(weights: np.ndarray, m: int,
                                         rng: np.random.Generator) -> np.ndarray:
    """Sequential renormalized draws; zero-weight rows only when forced."""
    w = weights.astype(float).copy()
    n = len(w)
    chosen = []
    for _ in range(m):
        total = w.sum()
        if total <= 0.0:
            # nothing left with positive weight: fall back to uniform over the rest
            remaining = np.setdiff1d(np.arange(n), chosen, assume_unique=False)
            pick = int(rng.choice(remaining))
        else:
            pick = int(rng.choice(n, p=w / total))
        chosen.append(pick)
        w[pick] = 0.0
    return np.array(chosen)


def leverage_subsample(ds: RegressionDataset, m: int, rng: np.random.Generator) -> RegressionDataset:
    """m rows without replacement, probabilities proportional to leverage scores
    of the homogenized matrix."""
    if not 1 <= m <= ds.n:
        raise ValueError(f"m must be in [1, {ds.n}], got {m}")
    prof = leverage_scores(homogenize(ds))
    idx = _weighted_sample_without_replacement(prof.scores, m, rng)
    return ds.take(idx)


def moment_reduce(syn: RegressionDataset) -> RegressionDataset:
    """Replace an m-point dataset by d+1 points with the same second moments.

    Eigendecomposes E[z z^T] of the homogenized points and emits rows
    sqrt(q * lambda_i) u_i; every homogeneous quadratic loss is preserved
    exactly. Rank-deficient moments yield zero rows.
    """
    z = homogenize(syn)
    q = z.shape[1]
    moment = (z.T @ z) / syn.n
    vals, vecs = np.linalg.eigh(moment)
    # null directions come back as +-eps eigenvalues; force them to zero rows
    tol = q * np.finfo(float).eps * max(float(vals.max()), 0.0)
    vals = np.where(vals > tol, vals, 0.0)
    rows = np.sqrt(q * vals)[:, None] * vecs.T
    return dehomogenize(rows)


def min_synth_size(train: RegressionDataset, eps: float, c_hat: float) -> int:
    """Count of moment-matrix eigenvalues above sqrt(eps)/c_hat^2.

    This is the number of singular values of the scaled homogenized matrix
    exceeding eps^(1/4)/c_hat, a floor on how many synthetic points any
    eps-accurate loss match needs.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 1.0 <= c_hat <= 2.0:
        raise ValueError("c_hat must be in [1, 2]")
    z = homogenize(train)
    moment = (z.T @ z) / train.n
    vals = np.linalg.eigvalsh(moment)
    return int(np.sum(vals > np.sqrt(eps) / c_hat**2))
