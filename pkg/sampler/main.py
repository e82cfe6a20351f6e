"""Command-line entry point: `sampler run | kernel-table | selftest`."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .commands import DEFAULT_CS, cmd_kernel_table, cmd_run, cmd_selftest
from .config import load_settings
from .errors import SamplerError

logger = logging.getLogger("sampler")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sampler", description="Riemannian proximal sampler experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment described by a config file")
    run.add_argument("--config", required=True, help="key = value experiment file")
    run.add_argument("--seed", type=int, default=None, help="override the configured seed")
    run.add_argument("--out", default=None, help="override the configured CSV path")
    run.set_defaults(handler=cmd_run)

    table = sub.add_parser("kernel-table", help="tabulate truncated heat-kernel values")
    table.add_argument("--dim", type=int, required=True, help="sphere dimension d (1 for the circle)")
    table.add_argument("--t", type=float, required=True, help="diffusion time")
    table.add_argument("--levels", required=True, help="comma-separated truncation levels")
    table.add_argument("--cs", default=DEFAULT_CS, help="comma-separated cosines of the distance")
    table.set_defaults(handler=cmd_kernel_table)

    selftest = sub.add_parser("selftest", help="run the fast property audits")
    selftest.add_argument("--seed", type=int, default=0)
    selftest.set_defaults(handler=cmd_selftest)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
    except SamplerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code

    logging.basicConfig(
        level=getattr(logging, settings.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        return args.handler(args, settings)
    except SamplerError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
