"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .errors import EmptyInput, InvalidFrame, ShapeError


def check_array(X, *, dtype=np.float64, ndim: int = 2, allow_empty: bool = False):
    """Coerce to a contiguous ndarray of the given dtype and rank, rejecting
    non-finite values."""
    X = np.ascontiguousarray(X, dtype=dtype)
    if X.ndim != ndim:
        raise ShapeError(f"expected a {ndim}-d array, got shape {X.shape}")
    if X.size == 0 and not allow_empty:
        raise EmptyInput("empty input array")
    if not np.isfinite(X).all():
        raise InvalidFrame("input contains NaN or Inf")
    return X


def check_X_y(X, y):
    X = check_array(X)
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-d, got shape {y.shape}")
    if y.shape[0] != X.shape[0]:
        raise ShapeError(
            f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
        )
    return X, y


def check_frame(samples, length: int = 1024) -> np.ndarray:
    """Validate one complex baseband frame and return it as complex128."""
    x = np.ascontiguousarray(samples, dtype=np.complex128)
    if x.ndim != 1 or x.shape[0] != length:
        raise InvalidFrame(f"frame must hold exactly {length} samples, got shape {x.shape}")
    if not np.isfinite(x.real).all() or not np.isfinite(x.imag).all():
        raise InvalidFrame("frame contains non-finite samples")
    return x
