"""Evaluation instruments for learned features.

* intra-class statistics of pairwise Euclidean distances,
* a linear softmax probe trained on frozen features,
* a deterministic 2-D PCA embedding for plotting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .linalg import as_matrix, pairwise_distances
from .net import softmax_loss_grad


@dataclass
class IntraClassStats:
    per_class: dict  # label -> {"mean", "variance", "pairs"}, or None when < 2 members
    total_mean: float
    total_variance: float
    total_pairs: int

    def to_dict(self):
        return {
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "total_mean": self.total_mean,
            "total_variance": self.total_variance,
            "total_pairs": self.total_pairs,
        }


def intra_class_stats(features, labels, num_classes=None) -> IntraClassStats:
    """Mean and population variance of within-class pairwise distances.

    ``total_*`` pools every intra-class pair across classes. Classes with
    fewer than two members are reported as None.
    """
    F = as_matrix(features, "features")
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (F.shape[0],):
        raise InputError("labels are not aligned with features")
    m = num_classes if num_classes is not None else (int(y.max()) + 1 if y.size else 0)
    per_class = {}
    pooled = []
    for c in range(m):
        members = F[y == c]
        if members.shape[0] < 2:
            per_class[c] = None
            continue
        D = pairwise_distances(members)
        d = D[np.triu_indices(members.shape[0], k=1)]
        per_class[c] = {"mean": float(d.mean()), "variance": float(d.var()), "pairs": int(d.size)}
        pooled.append(d)
    if pooled:
        allp = np.concatenate(pooled)
        return IntraClassStats(per_class, float(allp.mean()), float(allp.var()), int(allp.size))
    return IntraClassStats(per_class, float("nan"), float("nan"), 0)


def _standardize(train, test):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd == 0.0] = 1.0
    return (train - mu) / sd, (test - mu) / sd


def linear_probe(train_features, train_labels, test_features, test_labels,
                 epochs=200, lr=0.5, seed=0, num_classes=None):
    """Test accuracy of a softmax classifier fit to standardized train features.

    Full-batch gradient descent from a seeded small random init; the test
    features are standardized with the train statistics.
    """
    Xtr = as_matrix(train_features, "train_features")
    Xte = as_matrix(test_features, "test_features")
    ytr = np.asarray(train_labels, dtype=np.int64)
    yte = np.asarray(test_labels, dtype=np.int64)
    if Xtr.shape[1] != Xte.shape[1]:
        raise InputError("train and test feature dims differ")
    if ytr.shape != (Xtr.shape[0],) or yte.shape != (Xte.shape[0],):
        raise InputError("labels are not aligned with features")
    m = num_classes or int(max(ytr.max(), yte.max())) + 1
    Xtr, Xte = _standardize(Xtr, Xte)
    rng = np.random.default_rng(seed)
    W = 0.01 * rng.normal(size=(Xtr.shape[1], m))
    b = np.zeros(m)
    for _ in range(epochs):
        _, g = softmax_loss_grad(Xtr @ W + b, ytr)
        W -= lr * (Xtr.T @ g)
        b -= lr * g.sum(axis=0)
    pred = np.argmax(Xte @ W + b, axis=1)
    return float(np.mean(pred == yte))


def _top_eigvec(C, start, iters=2000, tol=1e-13):
    v = start / np.linalg.norm(start)
    for _ in range(iters):
        w = C @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return v, 0.0
        w /= nw
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    return v, float(v @ C @ v)


def pca_embed_2d(features):
    """Project centered features onto their top two principal directions.

    Uses power iteration with deflation from a fixed start vector. Returns
    ``(embedding n x 2, explained_variance_fractions length 2)``; the sign of
    each direction is fixed so its largest-magnitude entry is positive.
    """
    F = as_matrix(features, "features")
    n, d = F.shape
    if n < 2:
        raise InputError("need at least two rows")
    X = F - F.mean(axis=0)
    C = X.T @ X / n
    total = float(np.trace(C))
    if total <= 0.0:
        return np.zeros((n, 2)), np.zeros(2)
    start = np.random.default_rng(12345).normal(size=d)
    dirs, fracs = [], []
    for _ in range(min(2, d)):
        v, lam = _top_eigvec(C, start)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        dirs.append(v)
        fracs.append(max(lam, 0.0) / total)
        C = C - lam * np.outer(v, v)
    while len(dirs) < 2:
        dirs.append(np.zeros(d))
        fracs.append(0.0)
    return X @ np.column_stack(dirs), np.array(fracs)
