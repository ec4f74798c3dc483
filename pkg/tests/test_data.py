import numpy as np
import pytest

from stmn import data, metrics
from stmn.errors import InputError


def test_noiseless_sequences_lie_on_their_curve():
    seqs = data.gen_synthetic_manifold(3, 4, 20, 5, 0.0, seed=3)
    curves = data.class_curves(3, 5, 3)
    for s in seqs:
        assert np.max(np.abs(s.frames - curves[s.label](s.t))) < 1e-9


def test_generator_is_deterministic():
    a = data.gen_synthetic_manifold(2, 3, 16, 4, 0.3, seed=11, seq_offset_std=0.2)
    b = data.gen_synthetic_manifold(2, 3, 16, 4, 0.3, seed=11, seq_offset_std=0.2)
    assert all(np.array_equal(x.frames, y.frames) and x.label == y.label for x, y in zip(a, b))
    c = data.gen_synthetic_manifold(2, 3, 16, 4, 0.3, seed=12)
    assert not np.array_equal(a[0].frames, c[0].frames)


def test_low_dimensional_frames_are_supported():
    seqs = data.gen_synthetic_manifold(2, 2, 16, 2, 0.0, seed=0)
    assert seqs[0].frames.shape == (16, 2)


def test_separated_classes_are_linearly_separable():
    seqs = data.gen_synthetic_manifold(2, 30, 16, 6, 0.1, seed=5, separation=8.0)
    X = np.array([f for s in seqs for f in s.frames])
    y = np.array([s.label for s in seqs for _ in s.frames])
    idx = np.random.default_rng(0).permutation(len(y))
    tr, te = idx[: len(y) // 2], idx[len(y) // 2:]
    assert metrics.linear_probe(X[tr], y[tr], X[te], y[te]) >= 0.95


def test_noise_increases_intra_class_distances():
    means = []
    for noise in (0.1, 0.5, 1.0):
        seqs = data.gen_synthetic_manifold(3, 6, 16, 4, noise, seed=1)
        X = np.array([f for s in seqs for f in s.frames])
        y = np.array([s.label for s in seqs for _ in s.frames])
        means.append(metrics.intra_class_stats(X, y).total_mean)
    assert means[0] < means[1] < means[2]


def test_generator_errors():
    with pytest.raises(InputError):
        data.gen_synthetic_manifold(0, 1, 16, 2, 0.1, seed=0)
    with pytest.raises(InputError):
        data.gen_synthetic_manifold(1, 1, 16, 2, -0.1, seed=0)


@pytest.mark.parametrize("T,clip_len,overlap,starts", [
    (32, 16, 8, [0, 8, 16]),
    (16, 16, 8, [0]),
    (32, 16, 0, [0, 16]),
    (30, 16, 8, [0, 8]),
])
def test_clip_starts(T, clip_len, overlap, starts):
    assert data.clip_starts(T, clip_len, overlap) == starts


def test_clip_errors():
    with pytest.raises(InputError):
        data.clip_starts(10, 16, 8)
    with pytest.raises(InputError):
        data.clip_starts(32, 8, 8)


def test_clip_flattening_is_frame_major():
    frames = np.arange(32 * 2, dtype=float).reshape(32, 2)
    clips = data.clip_sequence(data.SequenceSample(0, 0, frames), 16, 8)
    assert len(clips) == 3
    np.testing.assert_array_equal(clips[1], frames[8:24].reshape(-1))
    assert clips[1][:4].tolist() == [16.0, 17.0, 18.0, 19.0]


def test_clips_cover_frames_without_overrun():
    T = 45
    starts = data.clip_starts(T, 16, 8)
    covered = set()
    for s in starts:
        covered |= set(range(s, s + 16))
    assert covered == set(range(starts[-1] + 16))
    assert starts[-1] + 16 <= T


def test_make_clips_bookkeeping():
    seqs = data.gen_synthetic_manifold(2, 2, 32, 3, 0.1, seed=0)
    cb = data.make_clips(seqs)
    assert cb.clips.shape == (12, 48)
    assert cb.clip_index.tolist() == [0, 1, 2] * 4
    assert cb.source_ids.tolist() == [0] * 3 + [1] * 3 + [2] * 3 + [3] * 3
    assert cb.num_classes == 2
    assert len(cb.subset([0, 5])) == 2


def test_split_is_by_sequence_and_stratified():
    seqs = data.gen_synthetic_manifold(3, 10, 16, 2, 0.1, seed=0)
    train, test = data.split_sources(seqs, 0.2, seed=4)
    assert {s.id for s in train}.isdisjoint({s.id for s in test})
    assert [sum(s.label == c for s in test) for c in range(3)] == [2, 2, 2]
    kept = data.subsample_sources(train, 0.5, seed=1)
    assert [sum(s.label == c for s in kept) for c in range(3)] == [4, 4, 4]
    with pytest.raises(InputError):
        data.subsample_sources(train, 0.0, seed=1)


def test_flip_labels():
    seqs = data.gen_synthetic_manifold(4, 10, 16, 2, 0.1, seed=0)
    flipped = data.flip_labels(seqs, 0.25, 4, seed=3)
    changed = [a.label != b.label for a, b in zip(seqs, flipped)]
    assert sum(changed) == 10
    assert all(0 <= s.label < 4 for s in flipped)
    assert all(np.array_equal(a.frames, b.frames) for a, b in zip(seqs, flipped))
    assert data.flip_labels(seqs, 0.0, 4, seed=3) == seqs
    with pytest.raises(InputError):
        data.flip_labels(seqs, 1.0, 4, seed=3)


def test_dataset_csv_round_trip(tmp_path):
    seqs = data.gen_synthetic_manifold(2, 2, 16, 3, 0.2, seed=0)
    data.write_dataset_csv(seqs, tmp_path / "d.csv")
    back = data.read_dataset_csv(tmp_path / "d.csv")
    assert [s.id for s in back] == [s.id for s in seqs]
    assert all(np.array_equal(a.frames, b.frames) and a.label == b.label for a, b in zip(seqs, back))
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == "id,label,frame_index,x0,x1,x2"


def test_dataset_csv_rejects_bad_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(InputError):
        data.read_dataset_csv(tmp_path / "bad.csv")


def test_features_csv_round_trip(tmp_path, rng):
    F = rng.normal(size=(5, 3))
    ids, ci, y = np.arange(5), np.zeros(5, int), np.array([0, 1, 0, 1, 1])
    data.write_features_csv(tmp_path / "f.csv", F, ids, ci, y)
    G, ids2, ci2, y2 = data.read_features_csv(tmp_path / "f.csv")
    assert np.array_equal(F, G)
    assert ids2.tolist() == ids.tolist() and y2.tolist() == y.tolist() and ci2.tolist() == ci.tolist()
