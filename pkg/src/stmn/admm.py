"""ADMM-BP training: backprop interleaved with manifold projection.

One iteration on a mini-batch:

1. forward the batch to get features ``F``;
2. project ``F - R/sigma`` onto the intra-class LLE patches to get ``Fhat``;
3. evaluate the classifier loss at ``Fhat`` and take its head gradients;
4. push ``dJ/dFhat + sigma (F - Fhat) - R`` into the trunk (straight-through);
5. apply one SGD step to head and trunk together;
6. measure ``eps = ||Fhat_new - Fhat_old||^2`` on a fixed anchor batch;
7. accept (update ``R`` on the batch rows) if ``eps < eta * eps_best``,
   otherwise keep ``R`` and double ``sigma``.

Training stops at ``max_iter`` iterations or once ``eps <= tol``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import net
from .errors import InputError, NumericError, TrainingDiverged
from .manifold import ManifoldConfig, project


@dataclass(frozen=True)
class AdmmConfig:
    alpha: float = 0.001
    lambda_reg: float = 0.001
    sigma0: float = 1.0
    eta: float = 1.0
    max_iter: int = 1000
    tol: float = 0.001
    batch_size: int = 50
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    flip_penalty_sign: bool = False
    baseline_mode: bool = False
    # None keeps the pure doubling rule; a cap stops sigma from overflowing
    sigma_max: float | None = None
    balanced_batches: bool = True
    eval_every: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise InputError("alpha must be positive")
        if not self.lambda_reg >= 0:
            raise InputError("lambda_reg must be nonnegative")
        if not (self.sigma0 > 0 and math.isfinite(self.sigma0)):
            raise InputError("sigma0 must be positive and finite")
        if not 0 < self.eta <= 1:
            raise InputError("eta must lie in (0, 1]")
        if self.max_iter < 0:
            raise InputError("max_iter must be >= 0")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.batch_size < 2:
            raise InputError("batch_size must be >= 2")
        if self.sigma_max is not None and not self.sigma_max >= self.sigma0:
            raise InputError("sigma_max must be >= sigma0")
        if self.eval_every < 1:
            raise InputError("eval_every must be >= 1")
        self.manifold.check_batch(self.batch_size)


@dataclass
class AdmmState:
    R: np.ndarray  # one multiplier row per training sample
    sigma: float
    eps_best: float = math.inf
    k: int = 0
    prev_Fhat_anchor: np.ndarray | None = None
    rejections: int = 0

    def copy(self) -> AdmmState:
        return replace(
            self,
            R=self.R.copy(),
            prev_Fhat_anchor=None if self.prev_Fhat_anchor is None else self.prev_Fhat_anchor.copy(),
        )


@dataclass
class IterationRecord:
    k: int
    loss: float  # mini-batch J_lambda at the network features F
    fhat_loss: float  # mini-batch J_lambda at the projected features
    augmented_loss: float
    eps: float
    sigma: float  # penalty used during this iteration
    accepted: bool | None  # None in baseline mode
    train_loss: float | None = None
    train_acc: float | None = None
    val_loss: float | None = None
    val_acc: float | None = None


class TrainHistory(list):
    """IterationRecords in iteration order."""

    def column(self, name):
        return [getattr(r, name) for r in self]

    def to_jsonl(self):
        return "".join(json.dumps(asdict(r)) + "\n" for r in self)

    def write_jsonl(self, path):
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read_jsonl(cls, path):
        lines = Path(path).read_text().splitlines()
        return cls(IterationRecord(**json.loads(line)) for line in lines if line.strip())


def augmented_objective(j_lambda, F, Fhat, R_batch, sigma):
    """``j_lambda + <R, Fhat - F> + sigma/2 ||Fhat - F||^2``."""
    F, Fhat, R_batch = (np.asarray(a, dtype=np.float64) for a in (F, Fhat, R_batch))
    if not F.shape == Fhat.shape == R_batch.shape:
        raise InputError("F, Fhat and R must share a shape")
    D = Fhat - F
    return float(j_lambda + np.sum(R_batch * D) + 0.5 * sigma * np.sum(D * D))


def feature_gradient(loss_grad_at_Fhat, F, Fhat, R_batch, sigma, flip_penalty_sign=False):
    """Gradient injected into the trunk at the feature layer.

    Default: the derivative of the augmented objective with respect to ``F``
    (``+ sigma (F - Fhat) - R``). ``flip_penalty_sign`` flips the penalty
    part to ``+ sigma (Fhat - F) + R``.
    """
    G, F, Fhat, R_batch = (np.asarray(a, dtype=np.float64)
                           for a in (loss_grad_at_Fhat, F, Fhat, R_batch))
    if not G.shape == F.shape == Fhat.shape == R_batch.shape:
        raise InputError("all feature-layer arrays must share a shape")
    if flip_penalty_sign:
        return G + sigma * (Fhat - F) + R_batch
    return G + sigma * (F - Fhat) - R_batch


def update_multiplier(R_batch, sigma, Fhat, F):
    return R_batch + sigma * (Fhat - F)


def penalty_schedule(state: AdmmState, eps, Fhat, F, batch_ids, eta, sigma_max=None):
    """Accept/reject branch of the penalty schedule; returns ``(state, accepted)``.

    Accept when ``eps < eta * eps_best``: multiplier rows of ``batch_ids``
    move by ``sigma (Fhat - F)``, sigma is kept and ``eps_best = eps``.
    Otherwise ``R`` is frozen and sigma doubles (clamped at ``sigma_max``).
    """
    if not eps >= 0:
        raise InputError(f"eps must be nonnegative, got {eps}")
    new = state.copy()
    accepted = eps < eta * state.eps_best
    if accepted:
        ids = np.asarray(batch_ids)
        new.R[ids] = update_multiplier(state.R[ids], state.sigma, Fhat, F)
        new.eps_best = float(eps)
    else:
        sigma = 2.0 * state.sigma
        if sigma_max is not None:
            sigma = min(sigma, sigma_max)
        new.sigma = sigma
        new.rejections += 1
    new.k = state.k + 1
    return new, accepted


class BatchSampler:
    """Seeded mini-batch sampler.

    Balanced mode takes an equal share of every class per batch from
    per-class reshuffled queues, so each class keeps enough batch members
    for its neighborhoods. Otherwise it walks epoch-wise permutations.
    """

    def __init__(self, labels, batch_size, rng, balanced=True):
        self.labels = np.asarray(labels, dtype=np.int64)
        self.batch_size = int(batch_size)
        self.rng = rng
        self.balanced = balanced
        n = self.labels.shape[0]
        if n == 0:
            raise InputError("cannot sample from an empty dataset")
        if balanced:
            classes = np.unique(self.labels)
            base, extra = divmod(self.batch_size, classes.size)
            self.pools = {int(c): np.flatnonzero(self.labels == c) for c in classes}
            self.quota = {int(c): min(base + (i < extra), self.pools[int(c)].size)
                          for i, c in enumerate(classes)}
        else:
            self.pools = {-1: np.arange(n)}
            self.quota = {-1: min(self.batch_size, n)}
        self.queues = {c: [] for c in self.pools}

    def _take(self, c, count):
        out = []
        while len(out) < count:
            if not self.queues[c]:
                self.queues[c] = list(self.pools[c][self.rng.permutation(self.pools[c].size)])
            need = count - len(out)
            fresh = [i for i in self.queues[c][:need] if i not in out]
            self.queues[c] = self.queues[c][need:]
            out += fresh
        return out

    def next_batch(self):
        idx = []
        for c in sorted(self.pools):
            idx += self._take(c, self.quota[c])
        return np.array(idx, dtype=np.int64)

    def get_state(self):
        return {
            "rng": self.rng.bit_generator.state,
            "queues": {str(c): [int(i) for i in q] for c, q in self.queues.items()},
        }

    def set_state(self, st):
        self.rng.bit_generator.state = st["rng"]
        self.queues = {int(c): list(q) for c, q in st["queues"].items()}


def _finite(*values):
    return all(v is None or math.isfinite(v) for v in values)


class Trainer:
    """Owns the network, the ADMM state and the sampler for one training run."""

    def __init__(self, config: AdmmConfig, params, train_set, val_set=None, shuffle_rng=None):
        if len(train_set) == 0:
            raise InputError("training set is empty")
        if train_set.clips.shape[1] != params.input_dim:
            raise InputError("clip dimension does not match the network input")
        self.config = config
        self.params = params.copy()
        self.train_set = train_set
        self.val_set = val_set
        rng = shuffle_rng if shuffle_rng is not None else np.random.default_rng(0)
        self.sampler = BatchSampler(train_set.labels, config.batch_size, rng,
                                    balanced=config.balanced_batches)
        self.anchor_ids = self.sampler.next_batch()
        self.state = AdmmState(
            R=np.zeros((len(train_set), params.feature_dim)), sigma=float(config.sigma0)
        )
        self.history = TrainHistory()
        self.state.prev_Fhat_anchor = self._anchor_projection(self.params, self.state)
        self.stopped = None

    def _project(self, F, ids, sigma, R):
        if self.config.baseline_mode:
            return F
        return project(F, R[ids], sigma, self.train_set.labels[ids], self.config.manifold)

    def _anchor_projection(self, params, state):
        X = self.train_set.clips[self.anchor_ids]
        F = net.forward(params, X).features
        return self._project(F, self.anchor_ids, state.sigma, state.R)

    def _evaluate(self, params):
        out = {}
        lam = self.config.lambda_reg
        for prefix, ds in (("train", self.train_set), ("val", self.val_set)):
            if ds is None or len(ds) == 0:
                continue
            cache = net.forward(params, ds.clips)
            out[f"{prefix}_loss"] = net.objective_j_lambda(params, cache, ds.labels, lam)
            out[f"{prefix}_acc"] = float(np.mean(np.argmax(cache.logits, axis=1) == ds.labels))
        return out

    def step(self) -> IterationRecord:
        cfg = self.config
        params, state = self.params, self.state
        ids = self.sampler.next_batch()
        X, y = self.train_set.clips[ids], self.train_set.labels[ids]
        try:
            cache = net.forward(params, X)
        except NumericError as exc:
            raise TrainingDiverged(str(exc), self.history) from None
        F = cache.features
        loss = net.objective_j_lambda(params, cache, y, cfg.lambda_reg)
        R_b = state.R[ids]

        if cfg.baseline_mode:
            Fhat = F
            fhat_loss = loss
            grads = net.backward(params, cache, y, cfg.lambda_reg)
        else:
            Fhat = self._project(F, ids, state.sigma, state.R)
            fhat_loss, _, _, dJ_dFhat = net.head_gradients(params, Fhat, y, cfg.lambda_reg)
            g_F = feature_gradient(dJ_dFhat, F, Fhat, R_b, state.sigma, cfg.flip_penalty_sign)
            grads = net.backward(params, net.with_features(cache, Fhat, params), y,
                                 cfg.lambda_reg, feature_grad_override=g_F)
        augmented = augmented_objective(fhat_loss, F, Fhat, R_b, state.sigma)
        new_params = net.sgd_step(params, grads, cfg.alpha)

        k = state.k + 1
        record = IterationRecord(k, loss, fhat_loss, augmented, math.nan, state.sigma, None)
        if not _finite(loss, fhat_loss, augmented):
            raise TrainingDiverged(f"non-finite loss at iteration {k}", self.history, record)
        try:
            Fhat_anchor = self._anchor_projection(new_params, state)
        except NumericError as exc:
            raise TrainingDiverged(f"iteration {k}: {exc}", self.history, record) from None
        with np.errstate(over="ignore", invalid="ignore"):
            eps = float(np.sum((Fhat_anchor - state.prev_Fhat_anchor) ** 2))
        record.eps = eps

        if cfg.baseline_mode:
            new_state = state.copy()
            new_state.k = k
        else:
            new_state, record.accepted = penalty_schedule(
                state, eps, Fhat, F, ids, cfg.eta, cfg.sigma_max)
        new_state.prev_Fhat_anchor = Fhat_anchor

        if k % cfg.eval_every == 0 or k == cfg.max_iter:
            for name, value in self._evaluate(new_params).items():
                setattr(record, name, value)
        if not _finite(eps, record.train_loss, record.val_loss):
            raise TrainingDiverged(f"non-finite metrics at iteration {k}", self.history, record)

        self.params, self.state = new_params, new_state
        self.history.append(record)
        return record

    def run(self, on_record=None):
        """Iterate until ``max_iter`` or ``eps <= tol``; returns the history."""
        while self.state.k < self.config.max_iter:
            record = self.step()
            if on_record is not None:
                on_record(record)
            if record.eps <= self.config.tol:
                self.stopped = "tol"
                return self.history
        self.stopped = "max_iter"
        return self.history

    def save(self, directory):
        """Persist params, ADMM state and sampler position for resuming."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        net.save_checkpoint(self.params, d / "checkpoint.json")
        st = self.state
        doc = {
            "sigma": st.sigma,
            "eps_best": None if math.isinf(st.eps_best) else st.eps_best,
            "k": st.k,
            "rejections": st.rejections,
            "R": st.R.tolist(),
            "prev_Fhat_anchor": st.prev_Fhat_anchor.tolist(),
            "anchor_ids": self.anchor_ids.tolist(),
            "sampler": self.sampler.get_state(),
        }
        (d / "admm_state.json").write_text(json.dumps(doc) + "\n")
        self.history.write_jsonl(d / "history.jsonl")

    def load(self, directory):
        d = Path(directory)
        self.params = net.load_checkpoint(d / "checkpoint.json")
        doc = json.loads((d / "admm_state.json").read_text())
        self.state = AdmmState(
            R=np.array(doc["R"], dtype=np.float64).reshape(self.state.R.shape),
            sigma=doc["sigma"],
            eps_best=math.inf if doc["eps_best"] is None else doc["eps_best"],
            k=doc["k"],
            prev_Fhat_anchor=np.array(doc["prev_Fhat_anchor"], dtype=np.float64),
            rejections=doc["rejections"],
        )
        self.anchor_ids = np.array(doc["anchor_ids"], dtype=np.int64)
        self.sampler.set_state(doc["sampler"])
        hist = d / "history.jsonl"
        self.history = TrainHistory.read_jsonl(hist) if hist.exists() else TrainHistory()
        return self


@dataclass
class TrainResult:
    params: net.NetParams
    history: TrainHistory
    state: AdmmState
    stopped: str | None


def train(config, params, train_set, val_set=None, shuffle_rng=None, on_record=None):
    trainer = Trainer(config, params, train_set, val_set, shuffle_rng)
    trainer.run(on_record)
    return TrainResult(trainer.params, trainer.history, trainer.state, trainer.stopped)


@dataclass
class FeatureChain:
    source_id: int
    label: int
    clip_index: np.ndarray
    features: np.ndarray  # N_t x d_f in clip order


def extract_features(params, dataset):
    """Forward-only features grouped into per-sequence chains, clip order kept."""
    feats = net.forward(params, dataset.clips).features
    chains = []
    for sid in np.unique(dataset.source_ids):
        rows = np.flatnonzero(dataset.source_ids == sid)
        rows = rows[np.argsort(dataset.clip_index[rows], kind="stable")]
        chains.append(FeatureChain(int(sid), int(dataset.labels[rows[0]]),
                                   dataset.clip_index[rows].copy(), feats[rows]))
    return chains
