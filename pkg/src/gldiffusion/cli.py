"""Command line entry point: ``gldiffusion <experiment> [--config F] [--seed S] ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import EXPERIMENTS, ExperimentConfig, run

log = logging.getLogger("gldiffusion")


def build_parser():
    ap = argparse.ArgumentParser(prog="gldiffusion", description=__doc__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="u64 seed (required here or in the config)")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args):
    d = {}
    if args.config:
        try:
            with open(args.config) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise SystemExit(f"cannot read config {args.config}: {exc}")
    if d.get("experiment", args.experiment) != args.experiment:
        raise SystemExit(f"config is for {d['experiment']!r}, not {args.experiment!r}")
    d["experiment"] = args.experiment
    for key in ("seed", "threads", "out"):
        val = getattr(args, key)
        if val is not None:
            d[key] = val
    if "seed" not in d:
        raise SystemExit("a seed is required (--seed or config)")
    return ExperimentConfig.from_dict(d)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
    except ValueError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    log.info("running %s with n_list=%s", cfg.experiment, cfg.n_list)
    rows = run(cfg)
    print(f"{cfg.experiment}: {len(rows)} rows written to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
