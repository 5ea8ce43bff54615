"""Command line entry point: ``adfem {run,verify,bench}``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..assembly import ConstraintError, ElementError, MeshError
from ..newton import LinearSolverError
from . import runner
from .config import ConfigError, default_config, load_config, with_overrides

# exception type -> (code, exit status)
_ERRORS = (
    (ConfigError, "E_CONFIG", 2),
    (MeshError, "E_MESH", 3),
    (ConstraintError, "E_CONFIG", 2),
    (OSError, "E_IO", 4),
    (ElementError, "E_ELEMENT", 6),
    (LinearSolverError, "E_LINEAR", 6),
    (ArithmeticError, "E_NUMERIC", 6),
)


def build_parser():
    parser = argparse.ArgumentParser(prog="adfem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "solve the configured case"),
                       ("verify", "Jacobian oracles and expm regression checks"),
                       ("bench", "AD cost ratio and timing tables")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="YAML case file (defaults to the channel case)")
        p.add_argument("--threads", type=int, default=None, help="assembly threads (1 = serial)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed for random states")
        p.add_argument("--out", metavar="DIR", default=None, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _fail(code, message, status):
    print(f"error[{code}]: {' '.join(str(message).split())}", file=sys.stderr)
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = with_overrides(cfg, args.threads, args.seed, args.out)
        result = {"run": runner.run_case, "verify": runner.verify_case,
                  "bench": runner.bench_case}[args.command](cfg)
    except runner.AppError as err:
        return _fail(err.code, err, err.status)
    except Exception as err:  # noqa: BLE001 - every failure becomes one line
        for kind, code, status in _ERRORS:
            if isinstance(err, kind):
                return _fail(code, err, status)
        return _fail("E_INTERNAL", f"{type(err).__name__}: {err}", 1)
    for name, path in result.artifacts.items():
        print(f"{name}\t{path}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
