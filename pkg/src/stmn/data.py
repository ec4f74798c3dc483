"""Synthetic sequence data, clip segmentation and CSV file formats.

Every class is a smooth helical curve in ``d_frame`` dimensions. A sequence
walks along its class curve in order, so consecutive frames (and the
overlapping clips cut from them) are temporally coherent.

File formats
------------
dataset CSV:  ``id,label,frame_index,x0..x{d-1}`` -- one row per frame.
features CSV: ``id,clip_index,label,f0..f{d-1}`` -- one row per clip.

Clips are flattened frame-major: ``[frame0 dims..., frame1 dims..., ...]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError


@dataclass
class SequenceSample:
    id: int
    label: int
    frames: np.ndarray  # T x d_frame
    t: np.ndarray | None = None  # curve parameter of each frame, when synthetic

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise InputError("frames must be a T x d_frame matrix")


@dataclass
class ClipBatch:
    clips: np.ndarray
    labels: np.ndarray
    source_ids: np.ndarray
    clip_index: np.ndarray
    num_classes: int = 0

    def __post_init__(self):
        n = self.clips.shape[0]
        for name in ("labels", "source_ids", "clip_index"):
            if getattr(self, name).shape != (n,):
                raise InputError(f"{name} is not aligned with clips")
        if not self.num_classes and n:
            self.num_classes = int(self.labels.max()) + 1

    def __len__(self):
        return self.clips.shape[0]

    def subset(self, idx) -> ClipBatch:
        idx = np.asarray(idx)
        return ClipBatch(self.clips[idx], self.labels[idx], self.source_ids[idx],
                         self.clip_index[idx], self.num_classes)


@dataclass
class ClassCurve:
    center: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    radius: float
    freq: float
    phase: float
    pitch: float

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)[..., None]
        ang = self.freq * t + self.phase
        return (self.center + self.radius * (np.cos(ang) * self.u + np.sin(ang) * self.v)
                + self.pitch * t * self.w)


def class_curves(num_classes, d_frame, seed, separation=1.0):
    """The per-class helices used by gen_synthetic_manifold for ``seed``."""
    rng = np.random.default_rng([seed, 0])
    curves = []
    for _ in range(num_classes):
        basis = np.zeros((d_frame, 3))
        # low-dimensional frames keep only the leading helix directions
        q, _ = np.linalg.qr(rng.normal(size=(d_frame, min(3, d_frame))))
        basis[:, :q.shape[1]] = q
        curves.append(ClassCurve(
            center=separation * rng.normal(size=d_frame),
            u=basis[:, 0], v=basis[:, 1], w=basis[:, 2],
            radius=float(rng.uniform(1.0, 2.0)),
            freq=float(rng.uniform(2.0, 4.0)) * np.pi,
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            pitch=float(rng.uniform(-1.0, 1.0)),
        ))
    return curves


def gen_synthetic_manifold(num_classes, seqs_per_class, T, d_frame, noise_std, seed,
                           separation=1.0, seq_offset_std=0.0):
    """Sequences of ``T`` ordered noisy points along per-class helices.

    Each sequence starts at a random curve position and advances a fixed
    step per frame. ``seq_offset_std`` adds one Gaussian offset per sequence
    (shared by all its frames), a stand-in for per-video nuisance such as
    actor or viewpoint. Deterministic in ``seed``.
    """
    if min(num_classes, seqs_per_class, T, d_frame) < 1:
        raise InputError("counts must be >= 1")
    if noise_std < 0 or seq_offset_std < 0:
        raise InputError("noise_std and seq_offset_std must be >= 0")
    curves = class_curves(num_classes, d_frame, seed, separation)
    rng = np.random.default_rng([seed, 1])
    step = 1.0 / (2.0 * T)
    out = []
    sid = 0
    for label, curve in enumerate(curves):
        for _ in range(seqs_per_class):
            t = rng.uniform(0.0, 1.0) + step * np.arange(T)
            frames = curve(t)
            if seq_offset_std > 0:
                frames = frames + seq_offset_std * rng.normal(size=d_frame)
            if noise_std > 0:
                frames = frames + noise_std * rng.normal(size=frames.shape)
            out.append(SequenceSample(sid, label, frames, t))
            sid += 1
    return out


def clip_starts(T, clip_len=16, overlap=8):
    if not clip_len > overlap >= 0:
        raise InputError(f"need clip_len > overlap >= 0, got {clip_len}, {overlap}")
    if T < clip_len:
        raise InputError(f"sequence of {T} frames is shorter than clip length {clip_len}")
    return list(range(0, T - clip_len + 1, clip_len - overlap))


def clip_sequence(seq: SequenceSample, clip_len=16, overlap=8):
    """Full overlapping windows of ``seq``, each flattened frame-major."""
    return [seq.frames[s:s + clip_len].reshape(-1)
            for s in clip_starts(seq.frames.shape[0], clip_len, overlap)]


def make_clips(samples, clip_len=16, overlap=8, num_classes=None) -> ClipBatch:
    rows, labels, sources, index = [], [], [], []
    for seq in samples:
        for j, clip in enumerate(clip_sequence(seq, clip_len, overlap)):
            rows.append(clip)
            labels.append(seq.label)
            sources.append(seq.id)
            index.append(j)
    if not rows:
        raise InputError("no clips produced")
    m = num_classes or (max(labels) + 1)
    return ClipBatch(np.array(rows), np.array(labels, dtype=np.int64),
                     np.array(sources, dtype=np.int64), np.array(index, dtype=np.int64), m)


def split_sources(samples, test_fraction, seed):
    """Split sequences (not clips) into train/test, stratified by label."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    labels = sorted({s.label for s in samples})
    for label in labels:
        group = [s for s in samples if s.label == label]
        order = rng.permutation(len(group))
        n_test = int(round(test_fraction * len(group)))
        test += [group[i] for i in sorted(order[:n_test])]
        train += [group[i] for i in sorted(order[n_test:])]
    return train, test


def subsample_sources(samples, fraction, seed):
    """Keep ``fraction`` of the sequences of every class."""
    if not 0.0 < fraction <= 1.0:
        raise InputError(f"fraction must lie in (0, 1], got {fraction}")
    keep, _ = split_sources(samples, 1.0 - fraction, seed)
    return keep


def flip_labels(samples, fraction, num_classes, seed):
    """Copies of ``samples`` with ``fraction`` of the sequences relabeled.

    Each chosen sequence gets a label drawn uniformly from the other classes.
    """
    if not 0.0 <= fraction < 1.0:
        raise InputError(f"label noise fraction must lie in [0, 1), got {fraction}")
    out = list(samples)
    n_flip = int(round(fraction * len(out)))
    if n_flip == 0 or num_classes < 2:
        return out
    rng = np.random.default_rng(seed)
    for i in sorted(rng.choice(len(out), size=n_flip, replace=False)):
        s = out[i]
        new = int(rng.integers(num_classes - 1))
        out[i] = SequenceSample(s.id, new + (new >= s.label), s.frames, s.t)
    return out


def write_dataset_csv(samples, path):
    d = samples[0].frames.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label", "frame_index"] + [f"x{j}" for j in range(d)])
        for s in samples:
            for f, row in enumerate(s.frames):
                w.writerow([s.id, s.label, f] + [repr(float(x)) for x in row])


def read_dataset_csv(path):
    """Inverse of write_dataset_csv; frames are ordered by ``frame_index``."""
    path = Path(path)
    seqs: dict[int, tuple[int, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["id", "label", "frame_index"] or len(header) < 4:
            raise InputError(f"{path}: expected header id,label,frame_index,x0,...")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                sid, label, f = int(row[0]), int(row[1]), int(row[2])
                vals = [float(x) for x in row[3:]]
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            entry = seqs.setdefault(sid, (label, []))
            if entry[0] != label:
                raise InputError(f"{path}:{lineno}: sequence {sid} changes label")
            entry[1].append((f, vals))
    out = []
    for sid in sorted(seqs):
        label, frames = seqs[sid]
        frames.sort(key=lambda fv: fv[0])
        out.append(SequenceSample(sid, label, np.array([v for _, v in frames])))
    return out


def write_features_csv(path, features, ids, clip_index, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "clip_index", "label"] + [f"f{j}" for j in range(features.shape[1])])
        for row, i, c, y in zip(features, ids, clip_index, labels):
            w.writerow([int(i), int(c), int(y)] + [repr(float(x)) for x in row])


def read_features_csv(path):
    """Return ``(features, ids, clip_index, labels)`` arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["id", "clip_index", "label"]:
            raise InputError(f"{path}: expected header id,clip_index,label,f0,...")
        rows = [r for r in reader]
    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    clip = np.array([int(r[1]) for r in rows], dtype=np.int64)
    labels = np.array([int(r[2]) for r in rows], dtype=np.int64)
    feats = np.array([[float(x) for x in r[3:]] for r in rows]).reshape(len(rows), len(header) - 3)
    return feats, ids, clip, labels
