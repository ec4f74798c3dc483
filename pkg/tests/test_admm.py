import math

import numpy as np
import pytest

from oracles import PlainSGD, augmented_loop, central_differences, max_relative_error
from stmn import data, net
from stmn.admm import (
    AdmmConfig,
    AdmmState,
    BatchSampler,
    Trainer,
    TrainHistory,
    augmented_objective,
    extract_features,
    feature_gradient,
    penalty_schedule,
    train,
    update_multiplier,
)
from stmn.errors import InputError, TrainingDiverged
from stmn.manifold import ManifoldConfig


def small_net(d_in, m, seed=0, hidden=(10, 6), activation="tanh"):
    dims = [d_in, *hidden]
    layers = [net.LayerSpec(a, b, activation) for a, b in zip(dims[:-1], dims[1:])]
    return net.init_params(layers, m, np.random.default_rng(seed))


def cfg(**kw):
    base = dict(alpha=0.05, sigma0=0.01, max_iter=10, tol=1e-300, batch_size=12,
                manifold=ManifoldConfig(H=3, ridge=1e-3))
    base.update(kw)
    return AdmmConfig(**base)


# ------------------------------------------------------- objective pieces

def test_augmented_objective_examples(rng):
    F = rng.normal(size=(2, 2))
    assert augmented_objective(0.7, F, F, rng.normal(size=(2, 2)), 3.0) == 0.7
    assert augmented_objective(0.7, F, F + 1.0, np.zeros((2, 2)), 2.0) == pytest.approx(4.7, abs=1e-12)
    F, Fh, R = rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    assert abs(augmented_objective(0.2, F, Fh, R, 1.7) - augmented_loop(0.2, F, Fh, R, 1.7)) < 1e-12
    with pytest.raises(InputError):
        augmented_objective(0.0, F, Fh[:2], R, 1.0)


def test_feature_gradient_examples(rng):
    G = rng.normal(size=(3, 2))
    F = rng.normal(size=(3, 2))
    for literal in (False, True):
        assert np.array_equal(feature_gradient(G, F, F, np.zeros_like(F), 2.0, literal), G)
    v = rng.normal(size=(3, 2))
    Z = np.zeros_like(v)
    np.testing.assert_allclose(feature_gradient(Z, F, F - v, Z, 1.0), v, atol=1e-15)
    np.testing.assert_allclose(feature_gradient(Z, F, F - v, Z, 1.0, True), -v, atol=1e-15)
    with pytest.raises(InputError):
        feature_gradient(G[:2], F, F, Z, 1.0)


def test_feature_gradient_matches_fd_of_augmented_objective(rng):
    F = rng.normal(size=(4, 3))
    Fh, R = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    sigma = 0.8
    g = feature_gradient(np.zeros_like(F), F, Fh, R, sigma)
    fd = central_differences(lambda: augmented_objective(0.0, F, Fh, R, sigma), [F])
    assert max_relative_error([g], fd) < 1e-5


def test_update_multiplier_examples():
    R = update_multiplier(np.zeros((1, 2)), 2.0, np.array([[0.5, -1.0]]), np.zeros((1, 2)))
    np.testing.assert_array_equal(R, [[1.0, -2.0]])
    F = np.ones((1, 2))
    R0 = np.array([[0.3, 0.4]])
    assert np.array_equal(update_multiplier(R0, 5.0, F, F), R0)
    v = np.array([[0.25, -0.5]])
    R2 = update_multiplier(update_multiplier(R0, 2.0, v, 0 * v), 2.0, v, 0 * v)
    np.testing.assert_allclose(R2, R0 + 2 * 2.0 * v, atol=1e-15)


# ------------------------------------------------------- branch table

def _state(n=4, d=2, sigma=1.0, eps_best=math.inf):
    return AdmmState(R=np.zeros((n, d)), sigma=sigma, eps_best=eps_best)


def test_schedule_accept_then_reject():
    Fhat, F = np.ones((2, 2)), np.zeros((2, 2))
    ids = np.array([1, 3])
    s1, ok = penalty_schedule(_state(), 5.0, Fhat, F, ids, eta=1.0)
    assert ok and s1.sigma == 1.0 and s1.eps_best == 5.0 and s1.k == 1
    np.testing.assert_array_equal(s1.R[ids], np.ones((2, 2)))
    assert not s1.R[[0, 2]].any()
    s2, ok = penalty_schedule(s1, 5.1, Fhat, F, ids, eta=1.0)
    assert not ok and s2.sigma == 2.0 and s2.eps_best == 5.0 and s2.k == 2
    assert np.array_equal(s2.R, s1.R)
    assert s2.rejections == 1


def test_schedule_strict_boundary_rejects():
    s, ok = penalty_schedule(_state(eps_best=4.0), 2.0, np.ones((1, 2)), np.zeros((1, 2)),
                             [0], eta=0.5)
    assert not ok and s.sigma == 2.0 and s.eps_best == 4.0
    assert not s.R.any()


def test_schedule_does_not_mutate_input_and_caps_sigma():
    st = _state(sigma=3.0, eps_best=1.0)
    s, ok = penalty_schedule(st, 2.0, np.ones((1, 2)), np.zeros((1, 2)), [0], 1.0, sigma_max=5.0)
    assert not ok and s.sigma == 5.0 and st.sigma == 3.0
    with pytest.raises(InputError):
        penalty_schedule(st, -1.0, np.ones((1, 2)), np.zeros((1, 2)), [0], 1.0)


def test_config_validation():
    for bad in (dict(eta=0.0), dict(eta=1.5), dict(tol=0.0), dict(alpha=0.0), dict(sigma0=-1.0),
                dict(batch_size=3), dict(sigma_max=0.001), dict(eval_every=0)):
        with pytest.raises(InputError):
            cfg(**bad)


# ------------------------------------------------------- sampler

def test_balanced_sampler_quota_and_distinct(small_clips):
    s = BatchSampler(small_clips.labels, 12, np.random.default_rng(0))
    for _ in range(20):
        b = s.next_batch()
        assert len(set(b.tolist())) == 12
        assert np.bincount(small_clips.labels[b], minlength=3).tolist() == [4, 4, 4]


def test_unbalanced_sampler_walks_permutations(small_clips):
    n = len(small_clips)
    s = BatchSampler(small_clips.labels, n, np.random.default_rng(0), balanced=False)
    assert sorted(s.next_batch().tolist()) == list(range(n))


# ------------------------------------------------------- trainer

def test_baseline_reduction_bit_exact(small_clips):
    p0 = small_net(small_clips.clips.shape[1], 3, seed=4)
    c = cfg(baseline_mode=True, alpha=0.1, lambda_reg=0.01)
    trainer = Trainer(c, p0, small_clips, shuffle_rng=np.random.default_rng(99))
    trainer.run()
    ref = PlainSGD([W for W, _ in p0.hidden], [b for _, b in p0.hidden],
                   [s.activation for s in p0.layers], p0.head_weights, p0.head_bias,
                   lam=0.01, alpha=0.1)
    sampler = BatchSampler(small_clips.labels, 12, np.random.default_rng(99))
    sampler.next_batch()  # the trainer's anchor batch
    for _ in range(10):
        ids = sampler.next_batch()
        ref.step(small_clips.clips[ids], small_clips.labels[ids])
    got = trainer.params
    for (W, b), rW, rb in zip(got.hidden, ref.W, ref.b):
        assert np.array_equal(W, rW) and np.array_equal(b, rb)
    assert np.array_equal(got.head_weights, ref.hW) and np.array_equal(got.head_bias, ref.hb)
    assert all(r.accepted is None for r in trainer.history)
    assert not trainer.state.R.any()


def test_consensus_step_equals_baseline(small_clips, monkeypatch):
    p0 = small_net(small_clips.clips.shape[1], 3, seed=1)
    a = Trainer(cfg(max_iter=1), p0, small_clips, shuffle_rng=np.random.default_rng(5))
    b = Trainer(cfg(max_iter=1, baseline_mode=True), p0, small_clips,
                shuffle_rng=np.random.default_rng(5))
    monkeypatch.setattr(a, "_project", lambda F, ids, sigma, R: F)
    a.step()
    b.step()
    assert all(np.array_equal(x, y) for x, y in zip(a.params.arrays(), b.params.arrays()))


def _one_batch():
    seqs = data.gen_synthetic_manifold(3, 3, 16, 3, 0.05, seed=2)
    return data.make_clips(seqs, clip_len=4, overlap=2)  # 21 clips per class


def test_augmented_objective_decreases_on_one_batch_with_fixed_sigma():
    one = _one_batch()
    c = AdmmConfig(alpha=0.05, sigma_max=1.0, max_iter=50, tol=1e-300, batch_size=len(one),
                   manifold=ManifoldConfig(H=3))
    res = train(c, small_net(one.clips.shape[1], 3, seed=0), one, shuffle_rng=np.random.default_rng(0))
    aug = res.history.column("augmented_loss")
    assert len(aug) == 50 and aug[-1] < 0.5 * aug[0]


def test_uncapped_doubling_inflates_the_recorded_objective():
    # With the literal defaults the first residual (R still zero) sets a tiny
    # eps_best, later residuals include the multiplier shift, and sigma keeps
    # doubling; the sigma/2 ||Fhat - F||^2 term then dominates the record.
    one = _one_batch()
    c = AdmmConfig(max_iter=50, tol=1e-300, batch_size=len(one), manifold=ManifoldConfig(H=3))
    res = train(c, small_net(one.clips.shape[1], 3, seed=0), one, shuffle_rng=np.random.default_rng(0))
    h = res.history
    assert h[0].accepted and h[0].eps < h[1].eps
    assert res.state.sigma == c.sigma0 * 2.0 ** res.state.rejections
    assert h[-1].augmented_loss > h[0].augmented_loss
    assert all(np.isfinite(h.column("fhat_loss")))


def test_schedule_invariants_over_a_run(small_clips):
    c = cfg(max_iter=40, sigma0=1e-3)
    t = Trainer(c, small_net(small_clips.clips.shape[1], 3), small_clips,
                shuffle_rng=np.random.default_rng(3))
    seen = np.zeros(len(small_clips), dtype=bool)
    sampler = BatchSampler(small_clips.labels, 12, np.random.default_rng(3))
    sampler.next_batch()
    best = math.inf
    for _ in range(40):
        ids = sampler.next_batch()
        rec = t.step()
        st = t.state
        assert st.sigma == c.sigma0 * 2.0 ** st.rejections
        assert rec.sigma <= st.sigma
        if rec.accepted:
            seen[ids] = True
            assert st.eps_best == rec.eps < best
            best = st.eps_best
        else:
            assert st.eps_best == best
    assert not t.state.R[~seen].any()
    assert any(r.accepted for r in t.history)


def test_null_run_and_tol_stop(small_clips):
    p0 = small_net(small_clips.clips.shape[1], 3)
    res = train(cfg(max_iter=0), p0, small_clips)
    assert len(res.history) == 0
    assert all(np.array_equal(a, b) for a, b in zip(res.params.arrays(), p0.arrays()))
    res = train(cfg(tol=math.inf), p0, small_clips)
    assert len(res.history) == 1 and res.stopped == "tol"


def test_training_is_deterministic(small_clips):
    p0 = small_net(small_clips.clips.shape[1], 3)
    runs = [train(cfg(), p0, small_clips, small_clips, np.random.default_rng(8)) for _ in range(2)]
    assert runs[0].history.to_jsonl() == runs[1].history.to_jsonl()


def test_flipped_sign_runs_and_differs(small_clips):
    p0 = small_net(small_clips.clips.shape[1], 3)
    a = train(cfg(max_iter=5), p0, small_clips, shuffle_rng=np.random.default_rng(1))
    b = train(cfg(max_iter=5, flip_penalty_sign=True), p0, small_clips,
              shuffle_rng=np.random.default_rng(1))
    assert a.history.column("loss")[0] == b.history.column("loss")[0]
    assert not np.array_equal(a.params.head_weights, b.params.head_weights) or \
        not np.array_equal(a.params.hidden[0][0], b.params.hidden[0][0])


def test_resume_matches_uninterrupted_run(small_clips, tmp_path):
    p0 = small_net(small_clips.clips.shape[1], 3)
    full = Trainer(cfg(max_iter=10), p0, small_clips, small_clips, np.random.default_rng(4))
    full.run()
    half = Trainer(cfg(max_iter=5), p0, small_clips, small_clips, np.random.default_rng(4))
    half.run()
    half.save(tmp_path)
    resumed = Trainer(cfg(max_iter=10), p0, small_clips, small_clips, np.random.default_rng(123))
    resumed.load(tmp_path)
    resumed.run()
    assert resumed.history.to_jsonl() == full.history.to_jsonl()
    assert all(np.array_equal(a, b) for a, b in zip(resumed.params.arrays(), full.params.arrays()))
    assert np.array_equal(resumed.state.R, full.state.R)


def test_history_jsonl_round_trip(small_clips, tmp_path):
    res = train(cfg(max_iter=3), small_net(small_clips.clips.shape[1], 3), small_clips, small_clips)
    res.history.write_jsonl(tmp_path / "h.jsonl")
    back = TrainHistory.read_jsonl(tmp_path / "h.jsonl")
    assert back == res.history
    assert {"k", "loss", "eps", "sigma", "accepted", "train_acc", "val_acc"} <= set(vars(back[0]))


def test_divergence_is_reported(small_clips):
    p0 = small_net(small_clips.clips.shape[1], 3, activation="identity")
    with pytest.raises(TrainingDiverged) as info:
        train(cfg(alpha=1e12, max_iter=50, baseline_mode=True), p0, small_clips)
    assert isinstance(info.value.history, TrainHistory)


def test_trainer_input_checks(small_clips):
    with pytest.raises(InputError):
        Trainer(cfg(), small_net(5, 3), small_clips)


def test_extract_features(small_clips):
    p = small_net(small_clips.clips.shape[1], 3)
    chains = extract_features(p, small_clips)
    assert len(chains) == len(np.unique(small_clips.source_ids))
    n_t = len(data.clip_starts(24, 8, 4))
    assert all(ch.features.shape == (n_t, p.feature_dim) for ch in chains)
    assert all(list(ch.clip_index) == list(range(n_t)) for ch in chains)
    stacked = np.vstack([ch.features for ch in chains])
    order = np.lexsort((small_clips.clip_index, small_clips.source_ids))
    np.testing.assert_array_equal(stacked, net.forward(p, small_clips.clips[order]).features)


def test_identical_clips_give_identical_features(small_clips):
    p = small_net(small_clips.clips.shape[1], 3)
    dup = small_clips.subset([0, 0])
    dup.source_ids = np.array([0, 1])
    a, b = extract_features(p, dup)
    assert np.array_equal(a.features, b.features)
