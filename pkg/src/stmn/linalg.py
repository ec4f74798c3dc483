"""Small dense linear algebra: checked arrays, ridge solves, distances.

Matrices and vectors are plain float64 ndarrays; the helpers here only add
validation so every caller gets the same error types.
"""

import numpy as np

from ._backend import kernels
from .errors import InputError, SingularMatrixError


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} has non-finite entries")
    return m


def as_vector(v, name="vector"):
    x = np.asarray(v, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} has non-finite entries")
    return x


def solve_linear(A, b, ridge=0.0):
    """Solve ``(A + ridge * trace(A)/n * I) x = b``.

    With ``ridge == 0`` a singular ``A`` raises SingularMatrixError. With a
    positive ridge that still leaves the system singular, the least-squares
    solution is returned instead.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    n = A.shape[0]
    if A.shape[1] != n:
        raise InputError(f"A must be square, got {A.shape}")
    if b.shape[0] != n:
        raise InputError(f"b has length {b.shape[0]}, expected {n}")
    if not ridge >= 0.0 or not np.isfinite(ridge):
        raise InputError(f"ridge must be a finite nonnegative number, got {ridge}")
    if n == 0:
        return np.zeros(0)
    if ridge > 0.0:
        A = A.copy()
        A[np.diag_indices(n)] += kernels.ridge_shift(A, ridge)
    try:
        return kernels.gauss_solve(A, b)
    except SingularMatrixError:
        if ridge == 0.0:
            raise
    return np.linalg.lstsq(A, b, rcond=None)[0]


def pairwise_distances(X):
    """Euclidean distance matrix between the rows of ``X``."""
    X = as_matrix(X, "X")
    if X.shape[0] < 1:
        raise InputError("need at least one row")
    D2 = kernels.sq_distances(np.ascontiguousarray(X))
    return np.sqrt(np.maximum(D2, 0.0))
