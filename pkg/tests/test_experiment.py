from types import SimpleNamespace

import numpy as np
import pytest

from conftest import CONFIGS
from stmn import experiment
from stmn.config import load_config, parse_config


def rec(k, val_acc=None, train_loss=None):
    return SimpleNamespace(k=k, val_acc=val_acc, train_loss=train_loss)


def test_peak_is_first_maximum():
    h = [rec(1, 0.2), rec(2, 0.5), rec(3, 0.4), rec(4, 0.5)]
    assert experiment._peak(h) == (2, 0.5)
    assert experiment._peak([rec(1)]) == (None, None)


def test_value_at_iteration_uses_latest_evaluation():
    h = [rec(1, train_loss=3.0), rec(2), rec(3, train_loss=1.0)]
    assert experiment._at_iteration(h, 2, "train_loss") == 3.0
    assert experiment._at_iteration(h, 3, "train_loss") == 1.0


def row(mode, mean, var, mid, peak):
    return {"run_id": mode, "seed": 0, "H": 5 if mode == "stmn" else None, "mode": mode,
            "intra_class_test": {"mean": mean, "variance": var}, "mid_train_loss": mid,
            "peak_val_iter": peak, "probe_accuracy": 0.9}


def test_compare_thresholds():
    c = experiment.compare(row("baseline", 10.0, 4.0, 1.0, 100), row("stmn", 9.0, 3.6, 1.0, 100))
    assert c["mean_ratio"] == pytest.approx(0.9) and c["variance_ratio"] == pytest.approx(0.9)
    assert c["checks"] == {"compaction": True, "convergence": True, "overfit_delay": True}
    c = experiment.compare(row("baseline", 10.0, 4.0, 1.0, 100), row("stmn", 9.1, 1.0, 1.1, 99))
    assert c["checks"] == {"compaction": False, "convergence": False, "overfit_delay": False}


def test_splits_are_shared_across_modes_and_seed_dependent():
    cfg = load_config(CONFIGS / "smoke.toml")
    a, b = experiment.build_splits(cfg, 0), experiment.build_splits(cfg, 0)
    assert np.array_equal(a.train.clips, b.train.clips)
    assert np.array_equal(a.test.labels, b.test.labels)
    c = experiment.build_splits(cfg, 1)
    assert not np.array_equal(a.train.clips, c.train.clips)
    assert set(a.train.source_ids).isdisjoint(set(a.test.source_ids))


def test_label_noise_touches_training_labels_only():
    base = load_config(CONFIGS / "smoke.toml")
    noisy = parse_config((CONFIGS / "smoke.toml").read_text().replace(
        "noise_std = 0.3", "noise_std = 0.3\nlabel_noise = 0.5"))
    a, b = experiment.build_splits(base, 0), experiment.build_splits(noisy, 0)
    assert np.array_equal(a.test.labels, b.test.labels)
    assert np.array_equal(a.train.clips, b.train.clips)
    assert not np.array_equal(a.train.labels, b.train.labels)


def test_train_fraction_subsamples_per_class():
    cfg = parse_config((CONFIGS / "smoke.toml").read_text().replace(
        'output_dir', 'train_fraction = 0.5\noutput_dir'))
    full = experiment.build_splits(load_config(CONFIGS / "smoke.toml"), 0)
    half = experiment.build_splits(cfg, 0)
    assert len(set(half.train.source_ids)) * 2 == len(set(full.train.source_ids))
    assert np.array_equal(half.test.clips, full.test.clips)


def test_same_seed_gives_identical_summary(tmp_path):
    cfg = load_config(CONFIGS / "smoke.toml")
    experiment.run_experiment(cfg, tmp_path / "a")
    experiment.run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()

