"""Intra-class locally linear projection of feature batches.

Each projected row is rebuilt from its ``H`` nearest same-class neighbors in
the current batch, using sum-to-one LLE reconstruction weights. The query is
the shifted point ``F_i - R_i / sigma``; the reconstruction uses the
neighbors' unshifted features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import InputError, ManifoldUnavailable, SingularMatrixError
from .linalg import as_matrix, as_vector

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class ManifoldConfig:
    H: int = 5
    ridge: float = DEFAULT_RIDGE
    intra_class_only: bool = True

    def __post_init__(self):
        if int(self.H) != self.H or self.H < 1:
            raise InputError(f"H must be a positive integer, got {self.H}")
        if not (self.ridge >= 0.0 and np.isfinite(self.ridge)):
            raise InputError(f"ridge must be finite and >= 0, got {self.ridge}")

    def check_batch(self, batch_size):
        if self.H >= batch_size:
            raise InputError(f"H={self.H} must be smaller than the batch size {batch_size}")


@dataclass
class LleWeights:
    neighbor_ids: np.ndarray
    omega: np.ndarray


def _labels(labels, n):
    y = np.asarray(labels)
    if y.shape != (n,):
        raise InputError(f"labels must have shape ({n},), got {y.shape}")
    return y.astype(np.int64)


def knn(features, query_index, labels, config: ManifoldConfig, query=None):
    """Indices of the ``H`` nearest batch rows to ``query`` (default: the
    row at ``query_index``), never including ``query_index`` itself.

    Restricted to rows sharing the query's label unless
    ``config.intra_class_only`` is False. Ties go to the lower index.
    """
    F = as_matrix(features, "features")
    n = F.shape[0]
    y = _labels(labels, n)
    if not 0 <= query_index < n:
        raise InputError(f"query index {query_index} out of range")
    q = F[query_index] if query is None else as_vector(query, "query")
    ids = kernels.nearest_in_batch(
        np.ascontiguousarray(q), np.ascontiguousarray(F), y, int(query_index),
        bool(config.intra_class_only), int(config.H),
    )
    if len(ids) < config.H:
        raise ManifoldUnavailable(
            f"sample {query_index} has {len(ids)} eligible neighbors, need {config.H}"
        )
    return np.asarray(ids, dtype=np.int64)


def lle_weights(query, neighbors, ridge=DEFAULT_RIDGE):
    """Sum-to-one weights reconstructing ``query`` from ``neighbors`` rows.

    Solves the local Gram system ``C w = 1`` with ``C`` shifted by
    ``ridge * trace(C) / H`` and normalizes ``w``. Weights may be negative.
    """
    q = as_vector(query, "query")
    N = as_matrix(neighbors, "neighbors")
    if N.shape[0] < 1:
        raise InputError("need at least one neighbor")
    if N.shape[1] != q.shape[0]:
        raise InputError("query and neighbors differ in dimension")
    if not ridge >= 0.0:
        raise InputError("ridge must be nonnegative")
    try:
        return kernels.lle_solve(np.ascontiguousarray(q), np.ascontiguousarray(N), float(ridge))
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"singular local Gram matrix with ridge={ridge}: {exc}") from None


def local_weights(features, query_index, labels, config, query=None) -> LleWeights:
    F = as_matrix(features, "features")
    q = F[query_index] if query is None else as_vector(query, "query")
    ids = knn(F, query_index, labels, config, query=q)
    return LleWeights(ids, lle_weights(q, F[ids], config.ridge))


def project(features, R, sigma, labels, config: ManifoldConfig, return_weights=False):
    """Project ``F - R/sigma`` row-wise onto the intra-class local patches.

    Rows without ``H`` eligible neighbors fall back to ``F - R/sigma``
    (the unconstrained minimizer). With ``return_weights`` the neighbor ids
    (``-1`` for fallback rows) and weights are returned as well.
    """
    F = as_matrix(features, "features")
    Rm = as_matrix(R, "R")
    if Rm.shape != F.shape:
        raise InputError(f"R shape {Rm.shape} != features shape {F.shape}")
    if not (sigma > 0.0 and np.isfinite(sigma)):
        raise InputError(f"sigma must be positive and finite, got {sigma}")
    y = _labels(labels, F.shape[0])
    Fhat, nbr, omega = kernels.project_batch(
        np.ascontiguousarray(F), np.ascontiguousarray(Rm), float(sigma), y,
        int(config.H), float(config.ridge), bool(config.intra_class_only),
    )
    if return_weights:
        return Fhat, nbr, omega
    return Fhat
