"""Pure numpy implementations of the hot kernels.

This module is the fallback used when the compiled ``_kernels`` extension is
missing, and the reference the extension is tested against. Every function
here has a twin with the same signature in ``_kernels.pyx``.
"""

import numpy as np

from .errors import SingularMatrixError

NAME = "python"

_EPS = np.finfo(np.float64).eps


def sq_distances(X):
    """Squared Euclidean distances between all rows of ``X``.

    Each pair is computed once from explicit differences and mirrored, so
    the result is exactly symmetric with an exactly zero diagonal.
    """
    n = X.shape[0]
    D = np.zeros((n, n))
    for i in range(n - 1):
        diff = X[i + 1:] - X[i]
        row = np.einsum("ij,ij->i", diff, diff)
        D[i, i + 1:] = row
        D[i + 1:, i] = row
    return D


def gauss_solve(A, b):
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    Raises SingularMatrixError when a pivot falls below ``n * eps * max|A|``.
    """
    M = np.array(A, dtype=np.float64, copy=True)
    x = np.array(b, dtype=np.float64, copy=True)
    n = M.shape[0]
    scale = np.max(np.abs(M)) if n else 0.0
    if n and scale == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    tol = n * _EPS * scale
    for col in range(n):
        p = col + int(np.argmax(np.abs(M[col:, col])))
        if abs(M[p, col]) <= tol:
            raise SingularMatrixError(f"pivot {col} below tolerance {tol:.3g}")
        if p != col:
            M[[col, p]] = M[[p, col]]
            x[[col, p]] = x[[p, col]]
        piv = M[col, col]
        for r in range(col + 1, n):
            f = M[r, col] / piv
            if f != 0.0:
                M[r, col:] -= f * M[col, col:]
                x[r] -= f * x[col]
    for r in range(n - 1, -1, -1):
        s = x[r]
        for c in range(r + 1, n):
            s -= M[r, c] * x[c]
        x[r] = s / M[r, r]
    return x


def ridge_shift(A, ridge):
    """Diagonal shift ``ridge * trace(A) / n`` (``ridge`` alone if trace <= 0)."""
    n = A.shape[0]
    tr = float(np.trace(A))
    return ridge * (tr / n if tr > 0.0 else 1.0)


def lle_solve(query, neighbors, ridge):
    """Sum-to-one reconstruction weights of ``query`` from ``neighbors`` rows."""
    G = query[None, :] - neighbors
    C = G @ G.T
    H = C.shape[0]
    if ridge > 0.0:
        C[np.diag_indices(H)] += ridge_shift(C, ridge)
    w = gauss_solve(C, np.ones(H))
    return w / w.sum()


def nearest(query, pool, candidates, H):
    """Indices of the ``H`` rows of ``pool`` (restricted to ``candidates``,
    given in increasing order) closest to ``query``; ties go to lower index."""
    diff = pool[candidates] - query
    d = np.einsum("ij,ij->i", diff, diff)
    order = np.argsort(d, kind="stable")[:H]
    return candidates[order]


def nearest_in_batch(query, F, labels, self_idx, intra, H):
    """Up to ``H`` nearest batch rows to ``query``, excluding ``self_idx``."""
    everyone = np.arange(F.shape[0])
    keep = everyone != self_idx
    if intra:
        keep &= labels == labels[self_idx]
    return nearest(query, F, everyone[keep], H)


def project_batch(F, R, sigma, labels, H, ridge, intra_class_only):
    """LLE projection of ``F - R / sigma`` onto same-class batch neighbors.

    Returns ``(Fhat, neighbor_ids, omega)``. Rows that lack ``H`` eligible
    neighbors get ``Fhat = F - R / sigma`` and ``neighbor_ids`` of -1.
    """
    n, d = F.shape
    Z = F - R / sigma
    Fhat = np.empty_like(F)
    nbr = np.full((n, H), -1, dtype=np.int64)
    omega = np.zeros((n, H))
    everyone = np.arange(n)
    for i in range(n):
        if intra_class_only:
            cand = everyone[(labels == labels[i]) & (everyone != i)]
        else:
            cand = everyone[everyone != i]
        if cand.size < H:
            Fhat[i] = Z[i]
            continue
        ids = nearest(Z[i], F, cand, H)
        w = lle_solve(Z[i], F[ids], ridge)
        Fhat[i] = w @ F[ids]
        nbr[i] = ids
        omega[i] = w
    return Fhat, nbr, omega
