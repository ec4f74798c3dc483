"""Command line entry point.

    stmn run <config> [--seed N] [--out DIR] [--mode baseline|stmn]
    stmn sweep-h <config> --values 5,15,20 [--seed N] [--out DIR]
    stmn report <dir>
"""

import argparse
import logging
import sys
from pathlib import Path

from . import experiment
from .config import parse_config
from .errors import ConfigError, StmnError, TrainingDiverged

log = logging.getLogger("stmn")


def _load(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    return parse_config(text, str(p)), text, p.parent


def _h_values(s):
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="stmn", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train baseline and/or stmn models")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="run only this root seed")
    run.add_argument("--out", help="output directory (default: output_dir from config)")
    run.add_argument("--mode", choices=("baseline", "stmn"), help="run only this mode")

    sw = sub.add_parser("sweep-h", help="one stmn run per neighborhood size")
    sw.add_argument("config")
    sw.add_argument("--values", type=_h_values, help="comma-separated H values "
                    "(default: h_sweep from config)")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out")

    rep = sub.add_parser("report", help="summarize a finished run directory")
    rep.add_argument("dir")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            return experiment.report(args.dir)
        cfg, text, base = _load(args.config)
        seeds = [args.seed] if args.seed is not None else None
        if args.command == "run":
            modes = [args.mode] if args.mode else None
            experiment.run_experiment(cfg, args.out, seeds, modes, config_text=text, base_dir=base)
        else:
            values = args.values if args.values is not None else cfg[""]["h_sweep"]
            table = experiment.sweep_h(cfg, values, args.out, seeds, config_text=text, base_dir=base)
            for row in table:
                print(f"H={row['H']} seed={row['seed']} probe_accuracy={row['probe_accuracy']:.4f}")
    except ConfigError as exc:
        print(f"stmn: config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"stmn: training diverged: {exc}", file=sys.stderr)
        return 3
    except StmnError as exc:
        print(f"stmn: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
