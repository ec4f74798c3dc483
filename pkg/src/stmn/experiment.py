"""Baseline vs manifold-regularized training runs and their artifacts.

Layout written by ``run_experiment`` under the output directory::

    config.toml            verbatim copy of the input config
    summary.json           per-run metrics and per-seed mode comparisons
    runs/<run_id>/history.jsonl
    runs/<run_id>/features.csv        training clips
    runs/<run_id>/features_test.csv   held-out clips
    runs/<run_id>/stats.json
    runs/<run_id>/embedding.csv       2-D PCA of held-out features
    runs/<run_id>/checkpoint.json

``summary.json`` schema (``"schema": "stmn-summary/1"``): ``runs`` is a list
of objects with ``run_id, mode, seed, H, iterations, stopped, final_loss,
final_train_acc, final_val_acc, peak_val_iter, peak_val_acc,
mid_train_loss, probe_accuracy, intra_class_test, intra_class_train,
sigma_final, rejections``; ``comparisons`` pairs the baseline and stmn runs
of one (seed, H) with ``mean_ratio, variance_ratio, mid_loss_ratio,
peak_iter_baseline, peak_iter_stmn`` and boolean ``checks``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data, metrics, net, seeds
from .admm import Trainer
from .config import admm_config, dump_config
from .errors import ConfigError, TrainingDiverged

log = logging.getLogger(__name__)

SUMMARY_SCHEMA = "stmn-summary/1"
RUN_FILES = ("history.jsonl", "features.csv", "stats.json")
COMPACTION_RATIO = 0.9


@dataclass
class Splits:
    train: data.ClipBatch
    test: data.ClipBatch


def build_splits(cfg, seed, base_dir=None) -> Splits:
    """Train/test clips for ``seed``; identical for every mode and H."""
    d = cfg["data"]
    if d["generator"] == "csv":
        path = Path(d["path"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        seqs = data.read_dataset_csv(path)
    else:
        seqs = data.gen_synthetic_manifold(
            d["num_classes"], d["seqs_per_class"], d["T"], d["d_frame"],
            float(d["noise_std"]), seeds.stream_seed(seed, "data"), float(d["separation"]),
            float(d["seq_offset_std"]),
        )
    m = max(s.label for s in seqs) + 1
    train, test = data.split_sources(seqs, float(d["test_fraction"]), seeds.stream_seed(seed, "split"))
    frac = float(cfg[""]["train_fraction"])
    if frac < 1.0:
        train = data.subsample_sources(train, frac, seeds.stream_seed(seed, "subsample"))
    if d["label_noise"] > 0:
        # only training labels are corrupted; held-out labels stay clean
        train = data.flip_labels(train, float(d["label_noise"]), m, seeds.stream_seed(seed, "labels"))
    return Splits(
        data.make_clips(train, d["clip_len"], d["overlap"], m),
        data.make_clips(test, d["clip_len"], d["overlap"], m),
    )


def build_layers(cfg, input_dim):
    dims = [input_dim] + list(cfg["net"]["hidden"])
    act = cfg["net"]["activation"]
    return [net.LayerSpec(a, b, act) for a, b in zip(dims[:-1], dims[1:])]


def run_id(mode, seed, H=None):
    return f"{mode}-seed{seed}" + (f"-H{H}" if H is not None else "")


def _peak(history):
    vals = [(r.k, r.val_acc) for r in history if r.val_acc is not None]
    if not vals:
        return None, None
    best = max(v for _, v in vals)
    k = next(k for k, v in vals if v == best)
    return k, best


def _at_iteration(history, k, name):
    """Latest evaluated ``name`` at or before iteration ``k``."""
    value = None
    for r in history:
        if r.k > k:
            break
        if getattr(r, name) is not None:
            value = getattr(r, name)
    return value


def train_one(cfg, seed, mode, H=None, out_dir=None, base_dir=None):
    """Train one (seed, mode, H) run and write its artifacts; returns its summary row."""
    splits = build_splits(cfg, seed, base_dir)
    layers = build_layers(cfg, splits.train.clips.shape[1])
    params0 = net.init_params(layers, splits.train.num_classes, seeds.stream(seed, "init"))
    acfg = admm_config(cfg, mode, H)
    rid = run_id(mode, seed, H)
    rdir = Path(out_dir) / "runs" / rid if out_dir is not None else None
    if rdir is not None:
        rdir.mkdir(parents=True, exist_ok=True)

    trainer = Trainer(acfg, params0, splits.train, splits.test, seeds.stream(seed, "shuffle"))
    try:
        trainer.run()
    except TrainingDiverged as exc:
        if rdir is not None:
            trainer.history.write_jsonl(rdir / "history.jsonl")
            (rdir / "diverged.json").write_text(json.dumps(
                {"run_id": rid, "error": str(exc),
                 "record": None if exc.record is None else exc.record.__dict__}) + "\n")
        raise TrainingDiverged(f"{rid}: {exc}", exc.history, exc.record) from None

    params, history = trainer.params, trainer.history
    F_train = net.forward(params, splits.train.clips).features
    F_test = net.forward(params, splits.test.clips).features
    m = splits.train.num_classes
    probe = metrics.linear_probe(
        F_train, splits.train.labels, F_test, splits.test.labels,
        epochs=cfg["probe"]["epochs"], lr=float(cfg["probe"]["lr"]),
        seed=seeds.stream_seed(seed, "probe"), num_classes=m,
    )
    st_test = metrics.intra_class_stats(F_test, splits.test.labels, m)
    st_train = metrics.intra_class_stats(F_train, splits.train.labels, m)
    embedding, explained = metrics.pca_embed_2d(F_test)
    peak_k, peak_acc = _peak(history)
    last = history[-1] if history else None
    row = {
        "run_id": rid,
        "mode": mode,
        "seed": seed,
        "H": acfg.manifold.H if mode == "stmn" else None,
        "iterations": len(history),
        "stopped": trainer.stopped,
        "final_loss": None if last is None else last.loss,
        "final_train_loss": None if last is None else last.train_loss,
        "final_train_acc": None if last is None else last.train_acc,
        "final_val_acc": None if last is None else last.val_acc,
        "peak_val_iter": peak_k,
        "peak_val_acc": peak_acc,
        "mid_train_loss": _at_iteration(history, acfg.max_iter // 2, "train_loss")
        if len(history) >= acfg.max_iter // 2 else None,
        "probe_accuracy": probe,
        "intra_class_test": {"mean": st_test.total_mean, "variance": st_test.total_variance},
        "intra_class_train": {"mean": st_train.total_mean, "variance": st_train.total_variance},
        "pca_explained": explained.tolist(),
        "sigma_final": trainer.state.sigma,
        "rejections": trainer.state.rejections,
    }
    if rdir is not None:
        history.write_jsonl(rdir / "history.jsonl")
        data.write_features_csv(rdir / "features.csv", F_train, splits.train.source_ids,
                                splits.train.clip_index, splits.train.labels)
        data.write_features_csv(rdir / "features_test.csv", F_test, splits.test.source_ids,
                                splits.test.clip_index, splits.test.labels)
        stats = {
            "run_id": rid,
            "probe_accuracy": probe,
            "intra_class_test": st_test.to_dict(),
            "intra_class_train": st_train.to_dict(),
            "pca_explained": explained.tolist(),
        }
        (rdir / "stats.json").write_text(json.dumps(stats, indent=2) + "\n")
        with open(rdir / "embedding.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "clip_index", "label", "pc1", "pc2"])
            for (x, y), i, c, lab in zip(embedding, splits.test.source_ids,
                                         splits.test.clip_index, splits.test.labels):
                w.writerow([int(i), int(c), int(lab), repr(float(x)), repr(float(y))])
        net.save_checkpoint(params, rdir / "checkpoint.json")
    return row


def _ratio(a, b):
    if a is None or b is None or b == 0:
        return None
    return a / b


def compare(baseline, stmn):
    """Directional checks for one baseline/stmn pair sharing seed and data."""
    mb, vb = baseline["intra_class_test"]["mean"], baseline["intra_class_test"]["variance"]
    ms, vs = stmn["intra_class_test"]["mean"], stmn["intra_class_test"]["variance"]
    mean_ratio, var_ratio = _ratio(ms, mb), _ratio(vs, vb)
    loss_ratio = _ratio(stmn["mid_train_loss"], baseline["mid_train_loss"])
    pb, ps = baseline["peak_val_iter"], stmn["peak_val_iter"]
    return {
        "seed": stmn["seed"],
        "H": stmn["H"],
        "baseline": baseline["run_id"],
        "stmn": stmn["run_id"],
        "mean_ratio": mean_ratio,
        "variance_ratio": var_ratio,
        "mid_loss_ratio": loss_ratio,
        "peak_iter_baseline": pb,
        "peak_iter_stmn": ps,
        "probe_baseline": baseline["probe_accuracy"],
        "probe_stmn": stmn["probe_accuracy"],
        "checks": {
            "compaction": mean_ratio is not None and var_ratio is not None
            and mean_ratio <= COMPACTION_RATIO and var_ratio <= COMPACTION_RATIO,
            "convergence": stmn["mid_train_loss"] is not None
            and baseline["mid_train_loss"] is not None
            and stmn["mid_train_loss"] <= baseline["mid_train_loss"],
            "overfit_delay": pb is not None and ps is not None and ps >= pb,
        },
    }


def _clean(obj):
    """JSON-safe copy: non-finite floats become None."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_summary(out_dir, rows, extra=None):
    by_key = {}
    for r in rows:
        by_key.setdefault((r["seed"], r["mode"]), []).append(r)
    comparisons = []
    for r in rows:
        if r["mode"] != "stmn":
            continue
        base = by_key.get((r["seed"], "baseline"))
        if base:
            comparisons.append(compare(base[0], r))
    doc = {"schema": SUMMARY_SCHEMA, "config_file": "config.toml", "runs": rows,
           "comparisons": comparisons}
    if extra:
        doc.update(extra)
    doc = _clean(doc)
    Path(out_dir, "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def _prepare_out(cfg, out_dir, config_text):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = config_text if config_text is not None else dump_config(cfg)
    (out / "config.toml").write_text(text)
    return out


def run_experiment(cfg, out_dir=None, seeds_=None, modes=None, config_text=None, base_dir=None):
    """Train every (seed, mode) pair and write artifacts plus summary.json."""
    out = _prepare_out(cfg, out_dir or cfg[""]["output_dir"], config_text)
    rows = []
    for seed in seeds_ if seeds_ is not None else cfg[""]["seeds"]:
        for mode in modes if modes is not None else cfg[""]["modes"]:
            log.info("training %s", run_id(mode, seed))
            rows.append(train_one(cfg, seed, mode, out_dir=out, base_dir=base_dir))
            write_summary(out, rows)
    return write_summary(out, rows)


def dedupe_h(values):
    seen, out = set(), []
    for h in values:
        if h in seen:
            log.warning("duplicate H=%d ignored", h)
            continue
        seen.add(h)
        out.append(h)
    return out


def sweep_h(cfg, values, out_dir=None, seeds_=None, config_text=None, base_dir=None):
    """One stmn run per (H, seed); writes h_sweep.csv and summary.json."""
    values = dedupe_h(list(values))
    if not values:
        raise ConfigError("no H values given")
    batch = cfg["admm"]["batch_size"]
    bad = [h for h in values if not (isinstance(h, int) and 1 <= h < batch)]
    if bad:
        raise ConfigError(f"H values {bad} must be positive and smaller than batch_size={batch}")
    out = _prepare_out(cfg, out_dir or cfg[""]["output_dir"], config_text)
    rows, table = [], []
    for h in values:
        for seed in seeds_ if seeds_ is not None else cfg[""]["seeds"]:
            log.info("training %s", run_id("stmn", seed, h))
            row = train_one(cfg, seed, "stmn", H=h, out_dir=out, base_dir=base_dir)
            rows.append(row)
            table.append({"H": h, "seed": seed, "probe_accuracy": row["probe_accuracy"]})
    with open(out / "h_sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["H", "seed", "probe_accuracy"])
        w.writeheader()
        for t in table:
            w.writerow({**t, "probe_accuracy": repr(t["probe_accuracy"])})
    write_summary(out, rows, {"h_sweep": table})
    return table


def missing_artifacts(run_dir):
    """Relative paths of required artifacts absent from ``run_dir``."""
    d = Path(run_dir)
    if not (d / "summary.json").is_file():
        found = sorted(p.parent for p in d.glob("runs/*/history.jsonl"))
        if not found:
            return ["summary.json"] + list(RUN_FILES)
        return ["summary.json"]
    doc = json.loads((d / "summary.json").read_text())
    missing = []
    for r in doc.get("runs", []):
        for f in RUN_FILES:
            rel = Path("runs") / r["run_id"] / f
            if not (d / rel).is_file():
                missing.append(str(rel))
    return missing


def _fmt(x, spec=".4f"):
    return "n/a" if x is None else format(x, spec)


def report(run_dir, out=print):
    """Print a human-readable summary; returns a process exit status."""
    missing = missing_artifacts(run_dir)
    if missing:
        out(f"error: {run_dir} is missing: " + ", ".join(missing))
        return 1
    doc = json.loads((Path(run_dir) / "summary.json").read_text())
    out(f"summary of {run_dir}")
    for r in doc["runs"]:
        ic = r["intra_class_test"]
        out(f"  {r['run_id']:<22} final_loss={_fmt(r['final_loss'])} "
            f"probe_acc={_fmt(r['probe_accuracy'])} "
            f"intra_mean={_fmt(ic['mean'])} intra_var={_fmt(ic['variance'])} "
            f"peak_val_iter={r['peak_val_iter']}")
    comps = doc.get("comparisons", [])
    if comps:
        out("  stmn vs baseline:")
        totals = {}
        for c in comps:
            flags = " ".join(f"{k}={'pass' if v else 'fail'}" for k, v in c["checks"].items())
            out(f"    seed {c['seed']}: variance_ratio={_fmt(c['variance_ratio'])} "
                f"mean_ratio={_fmt(c['mean_ratio'])} mid_loss_ratio={_fmt(c['mid_loss_ratio'])} {flags}")
            for k, v in c["checks"].items():
                totals[k] = totals.get(k, 0) + bool(v)
        for k, v in totals.items():
            out(f"  {k}: {v}/{len(comps)} seeds pass")
    if doc.get("h_sweep"):
        out("  H sweep (H, seed, probe accuracy):")
        for t in doc["h_sweep"]:
            out(f"    {t['H']:>3} {t['seed']:>3} {_fmt(t['probe_accuracy'])}")
    return 0
