"""Regression dataset ingestion, standardization, splitting and homogenization.

A dataset is a dense feature matrix plus a label vector, together with the
norm bounds used to constrain synthetic data: B bounds the l2 norm of every
feature row, b bounds every label magnitude.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset arguments."""


@dataclass
class RegressionDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    feature_bound: float  # B, max row l2 norm
    label_bound: float  # b, max |label|

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if self.labels.ndim != 1 or len(self.labels) != len(self.features):
            raise DataError("labels must be a vector with one entry per feature row")
        if len(self.features) < 1 or self.features.shape[1] < 1:
            raise DataError("dataset must have at least one row and one column")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "RegressionDataset":
        """Row subset, keeping the parent bounds."""
        return RegressionDataset(self.features[idx], self.labels[idx],
                                 self.feature_bound, self.label_bound)


def compute_bounds(features: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    B = float(np.max(np.linalg.norm(features, axis=1)))
    b = float(np.max(np.abs(labels)))
    return B, b


def make_dataset(features, labels) -> RegressionDataset:
    """Build a dataset with bounds computed from the data itself."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    B, b = compute_bounds(features, labels)
    return RegressionDataset(features, labels, B, b)


@dataclass
class StandardizationParams:
    mean: np.ndarray  # per column, label last
    std: np.ndarray  # per column; 1.0 for constant columns
    constant: np.ndarray  # boolean flags, label last


def _parse_rows(rows, path, label_col: int) -> RegressionDataset:
    feats, labels = [], []
    width = None
    for i, row in enumerate(rows):
        if not row:
            continue
        if width is None:
            width = len(row)
            if width < 2:
                raise DataError(f"{path}: need at least 2 columns, got {width}")
        if len(row) != width:
            raise DataError(f"{path}: row {i} has {len(row)} columns, expected {width}")
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise DataError(f"{path}: row {i}: {exc}") from None
        lc = label_col if label_col >= 0 else width + label_col
        labels.append(vals[lc])
        feats.append([v for j, v in enumerate(vals) if j != lc])
    if not feats:
        raise DataError(f"{path}: no data rows")
    return make_dataset(np.array(feats), np.array(labels))


def load_csv_regression(path, format: str = "generic", *, header: bool | None = None,
                        label_col: int = -1) -> RegressionDataset:
    """Load a regression dataset from a delimited text file.

    Formats:
      wine     semicolon-delimited with a header row, label column "quality" (last)
      housing  whitespace-delimited, 14 numeric columns, label last
      generic  comma-delimited, optional header, configurable label column
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    text = path.read_text()
    if not text.strip():
        raise DataError(f"{path}: empty file")
    if format == "wine":
        reader = csv.reader(text.splitlines(), delimiter=";")
        rows = list(reader)
        head = [h.strip().strip('"') for h in rows[0]]
        if head[-1].lower() != "quality":
            raise DataError(f"{path}: expected last column 'quality', got {head[-1]!r}")
        return _parse_rows(rows[1:], path, label_col=-1)
    if format == "housing":
        rows = [line.split() for line in text.splitlines() if line.strip()]
        if rows and len(rows[0]) != 14:
            raise DataError(f"{path}: expected 14 columns, got {len(rows[0])}")
        return _parse_rows(rows, path, label_col=-1)
    if format == "generic":
        rows = list(csv.reader(text.splitlines()))
        if header is None:
            # heuristic: a header is any first row with a non-numeric cell
            try:
                [float(v) for v in rows[0]]
                header = False
            except ValueError:
                header = True
        return _parse_rows(rows[1:] if header else rows, path, label_col=label_col)
    raise DataError(f"unknown format {format!r}")


def standardize(ds: RegressionDataset) -> tuple[RegressionDataset, StandardizationParams]:
    """Shift/scale every column (label included) to mean 0, population stddev 1.

    Constant columns are shifted to zero and flagged; their stored stddev is 1
    so the transform stays invertible.
    """
    if ds.n < 2:
        raise DataError("standardize needs at least 2 rows")
    cols = np.column_stack([ds.features, ds.labels])
    mean = cols.mean(axis=0)
    std = cols.std(axis=0)  # population stddev, divisor n
    constant = std == 0.0
    std = np.where(constant, 1.0, std)
    out = (cols - mean) / std
    return (make_dataset(out[:, :-1], out[:, -1]),
            StandardizationParams(mean=mean, std=std, constant=constant))


def destandardize(ds: RegressionDataset, params: StandardizationParams) -> RegressionDataset:
    """Inverse of standardize."""
    cols = np.column_stack([ds.features, ds.labels])
    cols = cols * params.std + params.mean
    return make_dataset(cols[:, :-1], cols[:, -1])


def train_test_split(ds: RegressionDataset, test_fraction: float,
                     seed: int) -> tuple[RegressionDataset, RegressionDataset]:
    """Deterministic shuffled split; test gets floor(n * fraction) rows."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_test = math.floor(ds.n * test_fraction)
    return ds.take(perm[n_test:]), ds.take(perm[:n_test])


def homogenize(ds: RegressionDataset) -> np.ndarray:
    """Append labels as an extra coordinate: row i becomes (x_i, y_i)."""
    return np.column_stack([ds.features, ds.labels])


def dehomogenize(points: np.ndarray) -> RegressionDataset:
    """Split (n, d+1) homogeneous points back into features and labels."""
    points = np.asarray(points, dtype=float)
    return make_dataset(points[:, :-1], points[:, -1])
