"""Dense feedforward trunk plus linear softmax head.

The trunk maps an input row to the feature layer ``F``; the head maps ``F``
to class logits. Gradients are exact (hand-written backprop), and
``backward`` accepts an override for the gradient entering the trunk at the
feature layer, which is how the ADMM trainer injects its penalty terms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InputError, NumericError

ACTIVATIONS = ("relu", "tanh", "identity")

CHECKPOINT_FORMAT = "stmn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise InputError(f"layer dims must be >= 1, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")


@dataclass
class NetParams:
    """Trainable weights. Also used to hold gradients of the same shapes."""

    layers: list[LayerSpec]
    hidden: list[tuple[np.ndarray, np.ndarray]]
    head_weights: np.ndarray
    head_bias: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.head_weights.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.head_weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim if self.layers else self.feature_dim

    def copy(self) -> NetParams:
        return NetParams(
            list(self.layers),
            [(W.copy(), b.copy()) for W, b in self.hidden],
            self.head_weights.copy(),
            self.head_bias.copy(),
        )

    def arrays(self) -> list[np.ndarray]:
        """Every parameter array, in declaration order."""
        out = []
        for W, b in self.hidden:
            out += [W, b]
        return out + [self.head_weights, self.head_bias]

    def validate(self):
        if len(self.layers) != len(self.hidden):
            raise InputError("one (weight, bias) pair is required per layer")
        prev = None
        for spec, (W, b) in zip(self.layers, self.hidden):
            if prev is not None and spec.in_dim != prev:
                raise InputError(f"layer input {spec.in_dim} does not chain from {prev}")
            if W.shape != (spec.in_dim, spec.out_dim) or b.shape != (spec.out_dim,):
                raise InputError(f"parameter shapes {W.shape}/{b.shape} do not match {spec}")
            prev = spec.out_dim
        d_f = prev if prev is not None else self.head_weights.shape[0]
        if self.head_weights.ndim != 2 or self.head_weights.shape[0] != d_f:
            raise InputError(f"head weights {self.head_weights.shape} do not match d_f={d_f}")
        if self.head_bias.shape != (self.head_weights.shape[1],):
            raise InputError("head bias length must equal class count")
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise InputError("parameters contain non-finite entries")
        return self


@dataclass
class ForwardCache:
    activations: list[np.ndarray]  # input batch, then one per layer
    pre_activations: list[np.ndarray]
    features: np.ndarray
    logits: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def batch_size(self) -> int:
        return self.features.shape[0]


def glorot_bound(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


def init_params(layers, num_classes, rng) -> NetParams:
    """Uniform(-s, s) weights with ``s = sqrt(6 / (in + out))``, zero biases."""
    layers = list(layers)
    if num_classes < 2:
        raise InputError("need at least two classes")
    hidden = []
    for spec in layers:
        s = glorot_bound(spec.in_dim, spec.out_dim)
        hidden.append((rng.uniform(-s, s, size=(spec.in_dim, spec.out_dim)), np.zeros(spec.out_dim)))
    d_f = layers[-1].out_dim
    s = glorot_bound(d_f, num_classes)
    head = rng.uniform(-s, s, size=(d_f, num_classes))
    return NetParams(layers, hidden, head, np.zeros(num_classes)).validate()


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z, a, kind):
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def head_logits(params, features):
    return features @ params.head_weights + params.head_bias


def forward(params: NetParams, batch) -> ForwardCache:
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError(f"batch must be a nonempty 2-D array, got shape {X.shape}")
    if X.shape[1] != params.input_dim:
        raise InputError(f"input dim {X.shape[1]} != network input dim {params.input_dim}")
    acts, pres = [X], []
    a = X
    # overflow is reported below as NumericError rather than as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for spec, (W, b) in zip(params.layers, params.hidden):
            z = a @ W + b
            a = _activate(z, spec.activation)
            pres.append(z)
            acts.append(a)
        logits = head_logits(params, a)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite activations in forward pass")
    return ForwardCache(acts, pres, a, logits)


def _check_labels(labels, n, m):
    y = np.asarray(labels)
    if y.shape != (n,):
        raise InputError(f"labels must have shape ({n},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise InputError("labels must be integers")
        y = y.astype(np.int64)
    if n and (y.min() < 0 or y.max() >= m):
        raise InputError(f"labels must lie in [0, {m})")
    return y


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_loss(logits, labels) -> float:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    logits = np.asarray(logits, dtype=np.float64)
    n, m = logits.shape
    y = _check_labels(labels, n, m)
    return float(-log_softmax(logits)[np.arange(n), y].mean())


def softmax_loss_grad(logits, labels):
    """Return ``(loss, d loss / d logits)`` for the mean softmax loss."""
    logits = np.asarray(logits, dtype=np.float64)
    n, m = logits.shape
    y = _check_labels(labels, n, m)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), y].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    return loss, dlogits / n


def weight_penalty(params, lam):
    """``lam/2 * ||head_weights||_F^2``; biases are not regularized."""
    return 0.5 * lam * float(np.sum(params.head_weights * params.head_weights))


def objective_j_lambda(params, cache, labels, lam) -> float:
    return softmax_loss(cache.logits, labels) + weight_penalty(params, lam)


def head_gradients(params, features, labels, lam):
    """Loss and gradients of the classifier head evaluated at ``features``.

    Returns ``(j_lambda, d_head_weights, d_head_bias, d_features)``.
    """
    logits = head_logits(params, features)
    loss, dlogits = softmax_loss_grad(logits, labels)
    dW = features.T @ dlogits + lam * params.head_weights
    db = dlogits.sum(axis=0)
    dF = dlogits @ params.head_weights.T
    return loss + weight_penalty(params, lam), dW, db, dF


def trunk_backward(params, cache, d_features):
    """Backpropagate ``d_features`` through the hidden layers."""
    grads = []
    delta = d_features
    for i in range(len(params.layers) - 1, -1, -1):
        spec = params.layers[i]
        W, _ = params.hidden[i]
        z, a = cache.pre_activations[i], cache.activations[i + 1]
        dz = delta * _activation_grad(z, a, spec.activation)
        grads.append((cache.activations[i].T @ dz, dz.sum(axis=0)))
        delta = dz @ W.T
    grads.reverse()
    return grads, delta


def backward(params, cache, labels, lam, feature_grad_override=None) -> NetParams:
    """Gradients of ``objective_j_lambda``, optionally with the trunk fed
    ``feature_grad_override`` instead of the head's feature gradient."""
    n = cache.batch_size
    if cache.logits.shape != (n, params.num_classes):
        raise InputError("cache does not match these parameters")
    _, dW, db, dF = head_gradients(params, cache.features, labels, lam)
    if feature_grad_override is not None:
        dF = np.asarray(feature_grad_override, dtype=np.float64)
        if dF.shape != cache.features.shape:
            raise InputError(f"override shape {dF.shape} != features shape {cache.features.shape}")
    hidden, _ = trunk_backward(params, cache, dF)
    return NetParams(list(params.layers), hidden, dW, db)


def sgd_step(params, grads, alpha) -> NetParams:
    """Return ``params - alpha * grads`` as a new NetParams."""
    if len(params.hidden) != len(grads.hidden):
        raise InputError("gradient structure does not match parameters")
    pairs = list(zip(params.arrays(), grads.arrays()))
    for p, g in pairs:
        if p.shape != g.shape:
            raise InputError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    hidden = [(W - alpha * gW, b - alpha * gb)
              for (W, b), (gW, gb) in zip(params.hidden, grads.hidden)]
    return NetParams(
        list(params.layers),
        hidden,
        params.head_weights - alpha * grads.head_weights,
        params.head_bias - alpha * grads.head_bias,
    )


def with_features(cache, features, params):
    """Copy of ``cache`` whose head sees ``features`` instead of the trunk output."""
    return replace(cache, features=features, logits=head_logits(params, features))


def params_to_dict(params):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "num_classes": params.num_classes,
        "layers": [
            {"in_dim": s.in_dim, "out_dim": s.out_dim, "activation": s.activation}
            for s in params.layers
        ],
        "hidden": [{"weight": W.tolist(), "bias": b.tolist()} for W, b in params.hidden],
        "head_weights": params.head_weights.tolist(),
        "head_bias": params.head_bias.tolist(),
    }


def params_from_dict(doc):
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise InputError("not an stmn checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {doc.get('version')}")
    layers = [LayerSpec(**spec) for spec in doc["layers"]]
    hidden = [
        (np.array(h["weight"], dtype=np.float64).reshape(s.in_dim, s.out_dim),
         np.array(h["bias"], dtype=np.float64).reshape(s.out_dim))
        for s, h in zip(layers, doc["hidden"])
    ]
    m = doc["num_classes"]
    head = np.array(doc["head_weights"], dtype=np.float64).reshape(-1, m)
    bias = np.array(doc["head_bias"], dtype=np.float64).reshape(m)
    return NetParams(layers, hidden, head, bias).validate()


def save_checkpoint(params, path):
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(params_to_dict(params)) + "\n")


def load_checkpoint(path) -> NetParams:
    return params_from_dict(json.loads(Path(path).read_text()))
