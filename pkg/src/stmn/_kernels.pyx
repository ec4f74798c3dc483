# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``.

Same signatures, same tie-breaking, same pivoting rule; results agree with
the numpy fallback to round-off.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.float cimport DBL_EPSILON

from .errors import SingularMatrixError

cnp.import_array()

NAME = "cython"


def sq_distances(double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, j, k
    cdef double s, t
    out = np.zeros((n, n))
    cdef double[:, ::1] D = out
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                t = X[j, k] - X[i, k]
                s += t * t
            D[i, j] = s
            D[j, i] = s
    return out


cdef int _gauss(double[:, ::1] M, double[::1] x) nogil:
    """In-place solve; returns the failing pivot column or -1 on success."""
    cdef Py_ssize_t n = M.shape[0], col, r, c, p
    cdef double scale = 0.0, tol, best, f, piv, s, tmp
    for r in range(n):
        for c in range(n):
            if fabs(M[r, c]) > scale:
                scale = fabs(M[r, c])
    if n and scale == 0.0:
        return 0
    tol = n * DBL_EPSILON * scale
    for col in range(n):
        p = col
        best = fabs(M[col, col])
        for r in range(col + 1, n):
            if fabs(M[r, col]) > best:
                best = fabs(M[r, col])
                p = r
        if best <= tol:
            return col
        if p != col:
            for c in range(n):
                tmp = M[col, c]
                M[col, c] = M[p, c]
                M[p, c] = tmp
            tmp = x[col]
            x[col] = x[p]
            x[p] = tmp
        piv = M[col, col]
        for r in range(col + 1, n):
            f = M[r, col] / piv
            if f != 0.0:
                for c in range(col, n):
                    M[r, c] -= f * M[col, c]
                x[r] -= f * x[col]
    for r in range(n - 1, -1, -1):
        s = x[r]
        for c in range(r + 1, n):
            s -= M[r, c] * x[c]
        x[r] = s / M[r, r]
    return -1


def gauss_solve(A, b):
    M = np.array(A, dtype=np.float64, order="C", copy=True)
    x = np.array(b, dtype=np.float64, copy=True)
    cdef int bad = _gauss(M, x)
    if bad >= 0:
        raise SingularMatrixError(f"pivot {bad} below tolerance")
    return x


cdef inline double _ridge_shift(double[:, ::1] C, Py_ssize_t H, double ridge) nogil:
    cdef double tr = 0.0
    cdef Py_ssize_t j
    for j in range(H):
        tr += C[j, j]
    return ridge * (tr / H if tr > 0.0 else 1.0)


def ridge_shift(A, double ridge):
    M = np.ascontiguousarray(A, dtype=np.float64)
    return _ridge_shift(M, M.shape[0], ridge)


cdef int _lle(double[::1] q, double[:, ::1] F, long[::1] ids, Py_ssize_t H,
              double ridge, double[:, ::1] C, double[:, ::1] G,
              double[::1] w) nogil:
    cdef Py_ssize_t d = F.shape[1], j, k, m
    cdef double s, shift
    for j in range(H):
        for m in range(d):
            G[j, m] = q[m] - F[ids[j], m]
    for j in range(H):
        for k in range(j, H):
            s = 0.0
            for m in range(d):
                s += G[j, m] * G[k, m]
            C[j, k] = s
            C[k, j] = s
    if ridge > 0.0:
        shift = _ridge_shift(C, H, ridge)
        for j in range(H):
            C[j, j] += shift
    for j in range(H):
        w[j] = 1.0
    if _gauss(C, w) >= 0:
        return 1
    s = 0.0
    for j in range(H):
        s += w[j]
    for j in range(H):
        w[j] /= s
    return 0


def lle_solve(query, neighbors, double ridge):
    q = np.ascontiguousarray(query, dtype=np.float64)
    N = np.ascontiguousarray(neighbors, dtype=np.float64)
    cdef Py_ssize_t H = N.shape[0]
    ids = np.arange(H, dtype=np.int_)
    C = np.empty((H, H))
    G = np.empty((H, N.shape[1]))
    w = np.empty(H)
    if _lle(q, N, ids, H, ridge, C, G, w):
        raise SingularMatrixError("LLE Gram matrix is singular")
    return w


cdef Py_ssize_t _nearest(double[::1] q, double[:, ::1] F, long[::1] labels,
                         Py_ssize_t self_idx, bint intra, Py_ssize_t H,
                         long[::1] best, double[::1] bestd) nogil:
    """Insertion-select the H nearest rows; returns how many were found."""
    cdef Py_ssize_t n = F.shape[0], d = F.shape[1], j, m, pos, found = 0
    cdef double s, t
    for j in range(n):
        if j == self_idx:
            continue
        if intra and labels[j] != labels[self_idx]:
            continue
        s = 0.0
        for m in range(d):
            t = F[j, m] - q[m]
            s += t * t
        if found == H and s >= bestd[H - 1]:
            continue
        pos = found if found < H else H - 1
        while pos > 0 and bestd[pos - 1] > s:
            bestd[pos] = bestd[pos - 1]
            best[pos] = best[pos - 1]
            pos -= 1
        bestd[pos] = s
        best[pos] = j
        if found < H:
            found += 1
    return found


def nearest_in_batch(query, F, labels, Py_ssize_t self_idx, bint intra, Py_ssize_t H):
    q = np.ascontiguousarray(query, dtype=np.float64)
    Fc = np.ascontiguousarray(F, dtype=np.float64)
    lab = np.ascontiguousarray(labels, dtype=np.int_)
    best = np.empty(H, dtype=np.int_)
    bestd = np.empty(H)
    cdef Py_ssize_t found = _nearest(q, Fc, lab, self_idx, intra, H, best, bestd)
    return best[:found]


def project_batch(F, R, double sigma, labels, Py_ssize_t H, double ridge,
                  bint intra_class_only):
    Fc = np.ascontiguousarray(F, dtype=np.float64)
    Rc = np.ascontiguousarray(R, dtype=np.float64)
    lab = np.ascontiguousarray(labels, dtype=np.int_)
    cdef Py_ssize_t n = Fc.shape[0], d = Fc.shape[1], i, j, m
    Z_arr = Fc - Rc / sigma
    Fhat_arr = np.empty((n, d))
    nbr_arr = np.full((n, H), -1, dtype=np.int_)
    omega_arr = np.zeros((n, H))
    cdef double[:, ::1] Fv = Fc, Z = Z_arr, Fhat = Fhat_arr, omega = omega_arr
    cdef long[:, ::1] nbr = nbr_arr
    cdef long[::1] labv = lab
    cdef long[::1] best = np.empty(H, dtype=np.int_)
    cdef double[::1] bestd = np.empty(H)
    cdef double[::1] w = np.empty(H)
    cdef double[:, ::1] C = np.empty((H, H))
    cdef double[:, ::1] G = np.empty((H, d))
    cdef double s
    cdef int failed = -1
    with nogil:
        for i in range(n):
            if _nearest(Z[i], Fv, labv, i, intra_class_only, H, best, bestd) < H:
                for m in range(d):
                    Fhat[i, m] = Z[i, m]
                continue
            if _lle(Z[i], Fv, best, H, ridge, C, G, w):
                failed = i
                break
            for m in range(d):
                s = 0.0
                for j in range(H):
                    s += w[j] * Fv[best[j], m]
                Fhat[i, m] = s
            for j in range(H):
                nbr[i, j] = best[j]
                omega[i, j] = w[j]
    if failed >= 0:
        raise SingularMatrixError(f"LLE Gram matrix singular for sample {failed}")
    return Fhat_arr, nbr_arr.astype(np.int64), omega_arr
