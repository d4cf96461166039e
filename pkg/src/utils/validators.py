"""Data validation helpers"""

import math
from typing import Sequence

import numpy as np

from src.exceptions import InvalidInputError

# Absolute floor for the relative symmetry / PSD tolerances
COV_TOLERANCE = 1e-12


def ensure_finite(name: str, *values: float) -> None:
    """Raise InvalidInputError if any value is NaN or infinite"""
    for value in values:
        if not math.isfinite(value):
            raise InvalidInputError(f"{name} must be finite, got {value!r}")


def ensure_sorted(name: str, times: Sequence[float], strict: bool = False) -> None:
    """Raise InvalidInputError if timestamps go backwards"""
    arr = np.asarray(times, dtype=float)
    if arr.size < 2:
        return
    steps = np.diff(arr)
    bad = np.flatnonzero(steps <= 0) if strict else np.flatnonzero(steps < 0)
    if bad.size:
        i = int(bad[0])
        raise InvalidInputError(
            f"{name} is not time-sorted: t[{i}]={arr[i]!r} then t[{i + 1}]={arr[i + 1]!r}"
        )


def check_covariance(matrix: np.ndarray, tol: float = COV_TOLERANCE) -> np.ndarray:
    """Validate a 2x2 covariance: finite, symmetric and PSD within a relative tolerance.

    Returns a read-only float copy so models holding it stay immutable.
    """
    cov = np.array(matrix, dtype=float)
    if cov.shape != (2, 2):
        raise ValueError(f"covariance must be 2x2, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise ValueError(f"covariance has non-finite entries: {cov.tolist()}")
    a, b, c, d = cov[0, 0], cov[0, 1], cov[1, 0], cov[1, 1]
    scale = max(1.0, abs(a), abs(d), abs(b), abs(c))
    limit = tol * scale
    if abs(b - c) > limit:
        raise ValueError(f"covariance is not symmetric: {cov.tolist()}")
    if a < -limit or d < -limit or a * d - b * c < -limit * scale:
        raise ValueError(f"covariance is not positive semidefinite: {cov.tolist()}")
    cov.setflags(write=False)
    return cov


def is_symmetric_psd(matrix: np.ndarray, tol: float = COV_TOLERANCE) -> bool:
    """Boolean form of check_covariance"""
    try:
        check_covariance(matrix, tol)
    except ValueError:
        return False
    return True
