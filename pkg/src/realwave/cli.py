"""Command line entry point: ``realwave run scenario.json``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError
from .scenario import ModuleFailure, load_scenario, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODULE = 3
EXIT_IO = 4

log = logging.getLogger("realwave")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="realwave", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario file")
    run.add_argument("scenario", help="path to a scenario JSON file")
    run.add_argument("--seed", type=int, default=None, help="override master_seed")
    run.add_argument("--out", default=None, help="output directory (default: scenario output_path)")
    run.add_argument("--force", action="store_true", help="write straight into --out, overwriting")
    run.add_argument("--threads", type=int, default=1, help="worker threads (wall time only)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_CONFIG
    try:
        scenario = load_scenario(args.scenario, args.seed)
        target = run_scenario(scenario, args.out, args.force, args.threads)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ModuleFailure as exc:
        log.error("module error: %s", exc)
        return EXIT_MODULE
    except OSError as exc:
        log.error("io error: %s", exc)
        return EXIT_IO
    print(target)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
