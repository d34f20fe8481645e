"""Command-line entry point: run one experiment, write a CSV."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import EXPERIMENTS, ExperimentConfig, emit_csv, run_experiment

logger = logging.getLogger("fastmwem")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fastmwem",
        description="Run a desk-scale benchmark experiment and emit CSV.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="results.csv")
    parser.add_argument("--paper-scale", action="store_true",
                        help="use the original (hours-scale) problem sizes")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    data["experiment"] = args.experiment
    if args.seed is not None:
        data["seed"] = args.seed
    if args.paper_scale:
        data["paper_scale"] = True
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        logger.error("config error: %s", exc)
        return 2
    logger.info("running %s (seed=%d, hash=%s)", cfg.experiment, cfg.seed, cfg.hash())
    records = run_experiment(cfg)
    emit_csv(records, args.out)
    logger.info("wrote %d rows to %s", len(records), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
