"""Experiment config files (TOML).

A config is a TOML document with top-level run settings and the tables
``[data]``, ``[net]``, ``[admm]``, ``[manifold]`` and ``[probe]``. Every key
is optional except where noted in ``SCHEMA``; unknown keys are rejected
with the line they appear on. ``dump_config`` writes a canonical TOML
document that parses back to the same config.
"""

from __future__ import annotations

import copy
import re
import sys
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .admm import AdmmConfig
from .errors import ConfigError, InputError
from .manifold import ManifoldConfig
from .net import ACTIVATIONS

_NUM = (int, float)

# section -> key -> (types, default)
SCHEMA = {
    "": {
        "name": (str, "experiment"),
        "seeds": (list, [0]),
        "modes": (list, ["baseline", "stmn"]),
        "output_dir": (str, "runs/experiment"),
        "h_sweep": (list, []),
        "train_fraction": (_NUM, 1.0),
    },
    "data": {
        "generator": (str, "synthetic"),
        "path": (str, ""),
        "num_classes": (int, 5),
        "seqs_per_class": (int, 50),
        "T": (int, 48),
        "d_frame": (int, 6),
        "noise_std": (_NUM, 0.6),
        "separation": (_NUM, 0.5),
        "seq_offset_std": (_NUM, 0.0),
        "label_noise": (_NUM, 0.0),
        "test_fraction": (_NUM, 0.2),
        "clip_len": (int, 16),
        "overlap": (int, 8),
    },
    "net": {
        "hidden": (list, [64, 16]),
        "activation": (str, "tanh"),
    },
    "admm": {
        "alpha": (_NUM, 0.001),
        "lambda_reg": (_NUM, 0.001),
        "sigma0": (_NUM, 1.0),
        "sigma_max": (_NUM, None),
        "eta": (_NUM, 1.0),
        "max_iter": (int, 1000),
        "tol": (_NUM, 0.001),
        "batch_size": (int, 50),
        "flip_penalty_sign": (bool, False),
        "balanced_batches": (bool, True),
        "eval_every": (int, 1),
    },
    "manifold": {
        "H": (int, 5),
        "ridge": (_NUM, 1e-6),
        "intra_class_only": (bool, True),
    },
    "probe": {
        "epochs": (int, 200),
        "lr": (_NUM, 0.5),
    },
}

MODES = ("baseline", "stmn")


def _line_of(text, section, key):
    """Best-effort line number of ``key`` inside ``[section]``."""
    current = ""
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\[\]]+)\]$", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*=", s):
            return i
    return None


def defaults():
    return {sec: {k: copy.deepcopy(v[1]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def _check_type(value, types, where, line):
    if types is bool:
        ok = isinstance(value, bool)
    elif types is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif types is _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    else:
        ok = isinstance(value, types)
    if not ok:
        name = getattr(types, "__name__", "number")
        raise ConfigError(f"{where}: expected {name}, got {value!r}", line)


def parse_config(text, source="<config>"):
    """Parse and validate TOML config text; returns a nested dict."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"{source}: {exc}", int(m.group(1)) if m else None) from None
    cfg = defaults()
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise ConfigError(f"unknown section [{key}]", _line_of(text, key, None))
            for sub, v in value.items():
                if sub not in SCHEMA[key]:
                    raise ConfigError(f"unknown key {key}.{sub}", _line_of(text, key, sub))
                _check_type(v, SCHEMA[key][sub][0], f"{key}.{sub}", _line_of(text, key, sub))
                cfg[key][sub] = v
        else:
            if key not in SCHEMA[""]:
                raise ConfigError(f"unknown key {key}", _line_of(text, "", key))
            _check_type(value, SCHEMA[""][key][0], key, _line_of(text, "", key))
            cfg[""][key] = value
    try:
        _validate(cfg)
    except _Invalid as exc:
        sec, _, k = exc.key.rpartition(".")
        line = _line_of(text, k, None) if k in SCHEMA else _line_of(text, sec, k)
        raise ConfigError(f"{exc.key}: {exc.message}", line) from None
    return cfg


class _Invalid(Exception):
    def __init__(self, key, message):
        super().__init__(key, message)
        self.key = key
        self.message = message


def _validate(cfg):
    top = cfg[""]
    if not top["seeds"] or not all(isinstance(s, int) and s >= 0 for s in top["seeds"]):
        raise _Invalid("seeds", "must be a nonempty list of nonnegative integers")
    if not top["modes"] or any(m not in MODES for m in top["modes"]):
        raise _Invalid("modes", f"entries must be among {MODES}")
    if not all(isinstance(h, int) and h >= 1 for h in top["h_sweep"]):
        raise _Invalid("h_sweep", "must list positive integers")
    if not 0.0 < top["train_fraction"] <= 1.0:
        raise _Invalid("train_fraction", "must lie in (0, 1]")
    d = cfg["data"]
    if d["generator"] not in ("synthetic", "csv"):
        raise _Invalid("data.generator", "must be 'synthetic' or 'csv'")
    if d["generator"] == "csv" and not d["path"]:
        raise _Invalid("data.path", "required when generator = 'csv'")
    if not 0.0 <= d["label_noise"] < 1.0:
        raise _Invalid("data.label_noise", "must lie in [0, 1)")
    if d["seq_offset_std"] < 0 or d["noise_std"] < 0:
        raise _Invalid("data.noise_std", "noise levels must be >= 0")
    if not 0.0 < d["test_fraction"] < 1.0:
        raise _Invalid("data.test_fraction", "must lie in (0, 1)")
    if not d["clip_len"] > d["overlap"] >= 0:
        raise _Invalid("data.overlap", "need clip_len > overlap >= 0")
    if d["T"] < d["clip_len"]:
        raise _Invalid("data.T", "must be >= clip_len")
    n = cfg["net"]
    if not n["hidden"] or not all(isinstance(h, int) and h >= 1 for h in n["hidden"]):
        raise _Invalid("net.hidden", "must be a nonempty list of positive integers")
    if n["activation"] not in ACTIVATIONS:
        raise _Invalid("net.activation", f"must be one of {ACTIVATIONS}")
    batch = cfg["admm"]["batch_size"]
    for h in top["h_sweep"] + [cfg["manifold"]["H"]]:
        if h >= batch:
            key = "h_sweep" if h in top["h_sweep"] else "manifold.H"
            raise _Invalid(key, f"H={h} must be smaller than admm.batch_size={batch}")
    try:
        admm_config(cfg)
    except InputError as exc:
        raise _Invalid("admm", str(exc)) from None


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from None
    return parse_config(text, str(p))


def manifold_config(cfg, H=None):
    m = cfg["manifold"]
    return ManifoldConfig(H=m["H"] if H is None else H, ridge=float(m["ridge"]),
                          intra_class_only=m["intra_class_only"])


def admm_config(cfg, mode="stmn", H=None):
    a = dict(cfg["admm"])
    for k in ("alpha", "lambda_reg", "sigma0", "eta", "tol"):
        a[k] = float(a[k])
    if a["sigma_max"] is not None:
        a["sigma_max"] = float(a["sigma_max"])
    return AdmmConfig(manifold=manifold_config(cfg, H), baseline_mode=(mode == "baseline"), **a)


def dump_config(cfg):
    """Canonical TOML for a parsed config (None values are omitted)."""
    doc = {k: v for k, v in cfg[""].items() if v is not None}
    for sec in SCHEMA:
        if sec:
            doc[sec] = {k: v for k, v in cfg[sec].items() if v is not None}
    return tomli_w.dumps(doc)
