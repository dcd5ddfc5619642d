"""Input validation helpers for array arguments."""

from __future__ import annotations

import numpy as np

SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9


def check_vector(v, n: int, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have {n} components, got shape {np.shape(v)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_matrix(m, n: int, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def is_symmetric(m, tol: float = SYMMETRY_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(m))))
    return bool(np.max(np.abs(m - m.T)) <= tol * scale)


def check_covariance(m, n: int, name: str = "covariance", definite: bool = False) -> np.ndarray:
    """Validate a symmetric PSD (or, with ``definite``, PD) matrix."""
    arr = check_matrix(m, n, name)
    if not is_symmetric(arr):
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(0.5 * (arr + arr.T))
    scale = max(1.0, float(np.max(np.abs(eig))))
    if definite and eig.min() <= 0:
        raise ValueError(f"{name} must be positive definite (min eigenvalue {eig.min():.3g})")
    if eig.min() < -PSD_TOL * scale:
        raise ValueError(f"{name} must be positive semi-definite (min eigenvalue {eig.min():.3g})")
    return arr


def as_covariance3(value, name: str = "R") -> np.ndarray:
    """Accept a scalar variance, a 3-vector diagonal, or a full 3x3 matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(3)
    elif arr.shape == (3,):
        arr = np.diag(arr)
    return check_covariance(arr, 3, name, definite=True)


def check_time_ns(t, name: str = "t") -> int:
    if isinstance(t, bool) or not isinstance(t, (int, np.integer)):
        raise TypeError(f"{name} must be integer UNIX nanoseconds")
    return int(t)
