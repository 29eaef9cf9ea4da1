"""Command-line entry point.

Usage::

    onsagerflow run <config.json> [--output DIR] [--seed-label STR]
    onsagerflow check <config.json>
    onsagerflow describe-models

Exit codes: 0 success, 2 invalid configuration, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import MODEL_SCHEMAS, PROFILES, REQUIRED, load_config
from .errors import (
    DomainViolation,
    NoConvergence,
    ParseError,
    ShiftViolation,
    SingularSystem,
    UnknownProfile,
    ValidationError,
)
from .simulation import run_simulation

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4

# model constructors report bad parameters as plain ValueError
_CONFIG_ERRORS = (ParseError, ValidationError, UnknownProfile, ValueError)
_SOLVER_ERRORS = (NoConvergence, SingularSystem, ShiftViolation)


def describe_models():
    """Parameter schema of every model; ``"<required>"`` marks mandatory keys."""
    return {
        "models": {
            kind: {k: ("<required>" if v is REQUIRED else v) for k, v in schema.items()}
            for kind, schema in MODEL_SCHEMAS.items()
        },
        "initial_condition_profiles": list(PROFILES),
    }


def _build_parser():
    parser = argparse.ArgumentParser(prog="onsagerflow", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a configuration and write outputs")
    run.add_argument("config")
    run.add_argument("--output", metavar="DIR", help="override output.directory")
    run.add_argument("--seed-label", metavar="STR", help="override output.label")
    check = sub.add_parser("check", help="validate a configuration without running it")
    check.add_argument("config")
    sub.add_parser("describe-models", help="print model parameter schemas as JSON")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "describe-models":
        print(json.dumps(describe_models(), indent=2))
        return EXIT_OK
    try:
        config = load_config(args.config)
        # building the model and initial state catches domain errors up front
        grid = config.build_grid()
        config.initial_state(grid, config.build_model(grid))
    except _CONFIG_ERRORS as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.command == "check":
        print(config.to_json())
        return EXIT_OK
    try:
        bundle = run_simulation(config, output_dir=args.output, label=args.seed_label)
    except _SOLVER_ERRORS + (DomainViolation,) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(bundle.manifest_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
