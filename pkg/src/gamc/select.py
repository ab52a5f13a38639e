"""Discriminant feature ranking by best-binary-split class entropy.

Each feature column is scored independently: its value range is divided
into uniform candidate thresholds, and the score is the minimum over
thresholds of the weighted class entropy of the two sides (in bits). Lower
is more discriminant. Constant columns score the parent entropy (no split
helps). This is the selection stage between feature extraction and the
classifiers; the survivor index list is persisted with the model so
inference sub-selects identically.
"""

from __future__ import annotations

import numpy as np

from .base import BaseEstimator, TransformerMixin, check_is_fitted
from .errors import EmptyInput, InvalidConfig, ShapeError


def _entropy_bits(counts: np.ndarray) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _column_loss(column: np.ndarray, y_idx: np.ndarray, n_classes: int, n_bins: int) -> float:
    n = len(column)
    lo = float(column.min())
    hi = float(column.max())
    parent = _entropy_bits(np.bincount(y_idx, minlength=n_classes).astype(float))
    if hi <= lo:
        return parent
    # bin index b means: value lies in [lo + b*w, lo + (b+1)*w); threshold i
    # (i = 1..n_bins-1) sends bins < i left, so "left" == "value < lo + i*w".
    scaled = (column - lo) * (n_bins / (hi - lo))
    bins = np.clip(scaled.astype(np.int64), 0, n_bins - 1)
    joint = np.bincount(bins * n_classes + y_idx, minlength=n_bins * n_classes)
    joint = joint.reshape(n_bins, n_classes).astype(np.float64)
    left = np.cumsum(joint, axis=0)[:-1]  # counts for thresholds 1..n_bins-1
    total = joint.sum(axis=0)
    right = total[None, :] - left

    def side_term(counts):
        sums = counts.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = counts / sums[:, None]
            logp = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
        h = -(p * logp).sum(axis=1)
        h[sums == 0] = 0.0
        return (sums / n) * h

    losses = side_term(left) + side_term(right)
    best = float(losses.min()) if losses.size else parent
    return min(best, parent)


def dft_score(column, labels, n_bins: int = 16) -> float:
    """Best-split weighted class entropy (bits) of one feature column."""
    column = np.ascontiguousarray(column, dtype=np.float64)
    if column.ndim != 1:
        raise ShapeError(f"column must be 1-d, got shape {column.shape}")
    if column.size == 0:
        raise EmptyInput("empty feature column")
    if n_bins < 2:
        raise InvalidConfig(f"n_bins must be >= 2, got {n_bins}")
    classes, y_idx = np.unique(np.asarray(labels), return_inverse=True)
    if len(classes) < 2:
        return 0.0
    return _column_loss(column, y_idx, len(classes), n_bins)


def dft_scores(X, labels, n_bins: int = 16) -> np.ndarray:
    """Score every column of X; returns losses in column order. Columns are
    cast to float64 one at a time, so float32 matrices stay un-copied."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-d, got shape {X.shape}")
    if X.size == 0:
        raise EmptyInput("empty feature matrix")
    classes, y_idx = np.unique(np.asarray(labels), return_inverse=True)
    if len(classes) < 2:
        return np.zeros(X.shape[1])
    return np.array(
        [_column_loss(np.ascontiguousarray(X[:, j], dtype=np.float64), y_idx,
                      len(classes), n_bins)
         for j in range(X.shape[1])]
    )


def select_features(X, labels, top_k: int, n_bins: int = 16) -> np.ndarray:
    """Indices of the top_k most discriminant columns, sorted by
    (loss ascending, index ascending). Deterministic."""
    X = np.asarray(X)
    if top_k <= 0:
        raise InvalidConfig(f"top_k must be positive, got {top_k}")
    if top_k > X.shape[1]:
        raise InvalidConfig(f"top_k={top_k} exceeds feature count {X.shape[1]}")
    losses = dft_scores(X, labels, n_bins)
    order = np.lexsort((np.arange(len(losses)), losses))
    return order[:top_k]


class DftSelector(BaseEstimator, TransformerMixin):
    """Estimator facade: fit() ranks columns, transform() keeps the top_k."""

    def __init__(self, top_k: int = 1000, n_bins: int = 16):
        self.top_k = top_k
        self.n_bins = n_bins

    def fit(self, X, y) -> "DftSelector":
        X = np.asarray(X)
        if X.ndim != 2:
            raise ShapeError(f"X must be 2-d, got shape {X.shape}")
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ShapeError(f"X has {X.shape[0]} rows but y has shape {y.shape}")
        self.losses_ = dft_scores(X, y, self.n_bins)
        order = np.lexsort((np.arange(len(self.losses_)), self.losses_))
        if self.top_k <= 0 or self.top_k > X.shape[1]:
            raise InvalidConfig(
                f"top_k must lie in [1, {X.shape[1]}], got {self.top_k}"
            )
        self.selected_ = order[: self.top_k]
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "selected_")
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"expected (n, {self.n_features_in_}) matrix, got shape {X.shape}"
            )
        return X[:, self.selected_]
