"""Command handlers for the `sampler` CLI; each returns a process exit code."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace

import numpy as np

from .config import Settings, load_config
from .errors import EXIT_OK, ConfigError
from .experiments import run_experiment
from .heat_kernel import kernel_table
from .selftest import run_selftest

logger = logging.getLogger(__name__)

DEFAULT_CS = "-1,-0.5,0,0.5,1"
KERNEL_TABLE_FIELDS = ["d", "t", "l", "c", "value", "tail_bound"]


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return run_experiment(cfg, settings, out_path=args.out)


def cmd_kernel_table(args: argparse.Namespace, settings: Settings) -> int:
    levels = _int_list("--levels", args.levels)
    cs = _float_list("--cs", args.cs)
    if args.dim < 1:
        raise ConfigError("--dim", "dimension must be >= 1")
    rows = kernel_table(args.dim, args.t, levels, cs)

    where = "the circle" if args.dim == 1 else f"S^{args.dim}"
    logger.info("truncated heat kernel on %s, t = %g: %d rows", where, args.t, len(rows))
    writer = csv.DictWriter(sys.stdout, fieldnames=KERNEL_TABLE_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace, settings: Settings) -> int:
    return run_selftest(seed=args.seed)


def _int_list(key: str, text: str):
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(key, f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError(key, "needs at least one value")
    return values


def _float_list(key: str, text: str):
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {text!r}") from None
    if not values or np.any(np.abs(values) > 1.0):
        raise ConfigError(key, "cosines must lie in [-1, 1]")
    return values
