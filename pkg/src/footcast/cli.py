"""Command-line entry point: ``footcast <command> [--config PATH] [--out DIR] ...``.

Failures print exactly one line, ``footcast: error: <kind>: <message>``, to
stderr and exit with status 2 (usage/config) or 1 (anything else).
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, FootcastError
from .harness import COMMANDS
from .planner import FORMULATIONS


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="footcast", description="Foothold-uncertainty experiments.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="experiment INI file (defaults built in)")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="run only this seed, overriding the config")
    parser.add_argument("--formulation", choices=FORMULATIONS, help="plan: run a single costmap formulation")
    parser.add_argument("--workers", type=int, help="worker processes for independent runs")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    first = str(message).strip().splitlines()[0] if str(message).strip() else kind
    print(f"footcast: error: {kind}: {first}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _fail("usage", exc, 2)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_seeds([args.seed])
        workers = args.workers if args.workers is not None else cfg.experiment.workers
        if workers < 1:
            raise ConfigurationError(f"--workers must be >= 1, got {workers}")
        kwargs = {"workers": workers}
        if args.command == "plan":
            kwargs["formulation"] = args.formulation
        elif args.formulation is not None:
            raise ConfigurationError("--formulation only applies to the plan command")
        COMMANDS[args.command](cfg, args.out, **kwargs)
    except ConfigurationError as exc:
        return _fail(exc.kind, exc, 2)
    except FootcastError as exc:
        return _fail(exc.kind, exc, 1)
    except OSError as exc:
        return _fail("io", exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
