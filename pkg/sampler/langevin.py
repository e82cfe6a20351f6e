"""Riemannian Langevin Monte Carlo baseline (exp-map Euler-Maruyama)."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DivergenceError, NumericalError
from .manifolds import Manifold, Point
from .optim import _expand
from .proximal import ChainTrace
from .rng import block_slices, chain_stream
from .targets import TargetSpec

logger = logging.getLogger(__name__)

DIVERGENCE_DISTANCE = 1e3


@dataclass(frozen=True)
class Constant:
    pass


@dataclass(frozen=True)
class Decreasing:
    """step_k = min(step, c / k) for k = 1, 2, ..."""
    c: float


@dataclass(frozen=True)
class LmcConfig:
    step: float
    schedule: Union[Constant, Decreasing] = Constant()

    def __post_init__(self):
        if not self.step > 0.0:
            raise ConfigError("lmc.step", f"step size must be positive, got {self.step}")
        if isinstance(self.schedule, Decreasing) and not self.schedule.c > 0.0:
            raise ConfigError("lmc.schedule_c", "schedule constant must be positive")

    def step_at(self, k: int) -> float:
        if isinstance(self.schedule, Decreasing):
            return min(self.step, self.schedule.c / k)
        return self.step


def rlmc_step(x, target: TargetSpec, step: float, rng: np.random.Generator):
    """x' = exp_x(-step grad f(x) + sqrt(2 step) xi); accepts a Point or a batch array."""
    if not step > 0.0:
        raise ValueError(f"step size must be positive, got {step}")
    if isinstance(x, Point):
        return Point(x.kind, rlmc_step(x.coords, target, step, rng))
    manifold = target.manifold
    grad = target.rgrad(x)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient in Langevin step")
    noise = manifold.random_tangent(x, 1.0, rng)
    return manifold.exp(x, -step * grad + math.sqrt(2.0 * step) * noise)


def rlmc_run(
    inits: np.ndarray,
    n_iters: int,
    target: TargetSpec,
    cfg: LmcConfig,
    seed: int = 0,
    reference: Optional[np.ndarray] = None,
    block_size: int = 250,
) -> ChainTrace:
    """Independent Langevin chains. A chain whose state stops being finite or
    moves farther than DIVERGENCE_DISTANCE from `reference` is frozen and flagged;
    `trace.peak_distance` keeps the largest distance each chain reached."""
    if n_iters < 1:
        raise ConfigError("lmc.iters", f"need at least one iteration, got {n_iters}")
    manifold = target.manifold
    inits = np.asarray(inits, dtype=float)
    n = manifold.batch_shape(inits)[0]
    if reference is None:
        reference = target.mode if target.mode is not None else manifold.base_point()
    started = time.perf_counter()

    states = np.empty((n_iters + 1,) + inits.shape)
    failed = np.zeros(n, dtype=bool)
    peak = np.zeros(n)
    for b, (lo, hi) in enumerate(block_slices(n, block_size)):
        rng = chain_stream(seed, b)
        s, f, p = _run_block(manifold, inits[lo:hi], n_iters, target, cfg, rng, reference)
        states[:, lo:hi] = s
        failed[lo:hi] = f
        peak[lo:hi] = p

    if np.any(failed):
        logger.warning("Langevin: %d of %d chains diverged", int(np.sum(failed)), n)
    zeros = np.zeros((n_iters, n), dtype=np.int64)
    trace = ChainTrace(states, zeros, zeros.copy(), 0, seed=seed, failed=failed,
                       elapsed_ms=1000.0 * (time.perf_counter() - started), manifold=manifold)
    trace.peak_distance = peak
    return trace


def _run_block(manifold: Manifold, inits, n_iters, target, cfg: LmcConfig, rng, reference):
    k = inits.shape[0]
    states = np.empty((n_iters + 1,) + inits.shape)
    states[0] = inits
    x = inits.copy()
    failed = np.zeros(k, dtype=bool)
    peak = safe_distance(manifold, x, reference)
    for it in range(n_iters):
        step = cfg.step_at(it + 1)
        live = np.flatnonzero(~failed)
        if live.size:
            with np.errstate(over="ignore", invalid="ignore"):
                grad = _safe_grad(target, x[live])
                noise = manifold.random_tangent(x[live], 1.0, rng)
                ok = _finite_rows(grad)
                v = np.where(_expand(ok, grad), -step * grad + math.sqrt(2.0 * step) * noise, 0.0)
                cand = _safe_exp(manifold, x[live], v)
            dist = safe_distance(manifold, cand, reference)
            dist = np.where(ok, dist, np.inf)
            peak[live] = np.maximum(peak[live], dist)
            bad = ~(dist <= DIVERGENCE_DISTANCE)
            x[live] = np.where(_expand(bad, cand), x[live], cand)
            failed[live[bad]] = True
        states[it + 1] = x
    return states, failed, peak


def _finite_rows(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1:
        return np.isfinite(a)
    return np.all(np.isfinite(a.reshape(a.shape[0], -1)), axis=1)


def _safe_grad(target: TargetSpec, x: np.ndarray) -> np.ndarray:
    """Row-wise gradient; rows whose matrix functions break become NaN."""
    try:
        return target.rgrad(x)
    except (NumericalError, np.linalg.LinAlgError):
        out = np.full_like(x, np.nan)
        for i in range(x.shape[0]):
            try:
                out[i] = target.rgrad(x[i])
            except (NumericalError, np.linalg.LinAlgError):
                pass
        return out


def _safe_exp(manifold: Manifold, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise exp map; rows that overflow or break the matrix functions become NaN."""
    try:
        return manifold.exp(x, v)
    except (NumericalError, np.linalg.LinAlgError):
        out = np.full_like(x, np.nan)
        for i in range(x.shape[0]):
            try:
                out[i] = manifold.exp(x[i], v[i])
            except (NumericalError, np.linalg.LinAlgError):
                pass
        return out


def safe_distance(manifold: Manifold, x: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Distances to `reference`, +inf for rows that are not finite points."""
    x = np.asarray(x, dtype=float)
    ok = _finite_rows(x)
    out = np.full(x.shape[0], np.inf)
    if not np.any(ok):
        return out
    rows = np.flatnonzero(ok)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            out[rows] = manifold.dist(x[rows], reference)
    except (NumericalError, np.linalg.LinAlgError):
        for i in rows:
            try:
                out[i] = float(manifold.dist(x[i], reference))
            except (NumericalError, np.linalg.LinAlgError):
                out[i] = np.inf
    return np.where(np.isfinite(out), out, np.inf)
