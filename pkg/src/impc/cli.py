"""Command line front end.

impc {identify | synthesize | simulate | fd} --config cfg.json [--out DIR]

Exit codes: 0 success, 1 usage or config problems, 2 when a run breaks a
closed-loop invariant (constraint violation or loss of feasibility).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigError, ImpcError
from .harness import ExperimentConfig, run_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impc",
        description="data-driven robust predictive control experiments",
    )
    parser.add_argument("command",
                        choices=["identify", "synthesize", "simulate", "fd"],
                        help="pipeline stage to run")
    parser.add_argument("--config", required=True,
                        help="path to a JSON experiment config")
    parser.add_argument("--out", default="out",
                        help="artifact directory (default: ./out)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_json(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed", "must be nonnegative")
            cfg = replace(cfg, seed=args.seed)
        return run_config(cfg, args.command, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ImpcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
