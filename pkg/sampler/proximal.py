"""
Riemannian proximal sampler.

One iteration draws y ~ pi(y | x) (MBI half-step) and then
x' ~ pi(x | y) proportional to exp(-f(x)) nu(eta, x, y) (RHK half-step).
Chains are advanced in batches; `run_chains` splits a chain set into blocks
with one random stream per block.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple, Union

import numpy as np

from . import oracles
from .errors import ConfigError, NoTruncationLevelError, NumericalError
from .heat_kernel import SERIES_MIN_TIME, HeatKernelSpec
from .manifolds import SPD, Circle, Manifold, Point, Sphere
from .optim import ModeOptions, _expand
from .rejection import DEFAULT_CAP
from .rng import block_slices, chain_stream
from .targets import TargetSpec

logger = logging.getLogger(__name__)

PROPOSAL_CENTERS = ("mode", "anchor")


# =============================
# Oracle choices
# =============================

@dataclass(frozen=True)
class SeriesRejection:
    """MBI by rejection from the truncated heat kernel (level None: chosen from zeta)."""
    level: Optional[int] = None


@dataclass(frozen=True)
class GeodesicRandomWalk:
    substeps: int = 1


@dataclass(frozen=True)
class RGaussianVaradhan:
    """MBI by exact Riemannian Gaussian mu(eta, x, .)."""


@dataclass(frozen=True)
class TruncatedKernelRejection:
    level: Optional[int] = None


@dataclass(frozen=True)
class VaradhanRejection:
    pass


MbiOracle = Union[SeriesRejection, GeodesicRandomWalk, RGaussianVaradhan]
RhkOracle = Union[TruncatedKernelRejection, VaradhanRejection]


# =============================
# Configuration
# =============================

@dataclass(frozen=True)
class SamplerConfig:
    eta: float
    mbi_oracle: MbiOracle = RGaussianVaradhan()
    rhk_oracle: RhkOracle = VaradhanRejection()
    proposal_t: Optional[float] = None
    proposal_center: Optional[str] = None
    rejection_cap: int = DEFAULT_CAP
    clip_acceptance: bool = True
    zeta: float = 1e-10
    varadhan_offset: Optional[float] = None
    calibration_points: int = oracles.CALIBRATION_POINTS
    calibration_refinements: int = oracles.CALIBRATION_REFINEMENTS
    mode_options: ModeOptions = ModeOptions()

    def __post_init__(self):
        if not self.eta > 0.0:
            raise ConfigError("sampler.eta", f"step size must be positive, got {self.eta}")
        if self.rejection_cap < 1:
            raise ConfigError("sampler.rejection_cap", "cap must be >= 1")
        if not self.zeta > 0.0:
            raise ConfigError("sampler.zeta", "accuracy target must be positive")
        if self.proposal_t is not None and not self.proposal_t > 0.0:
            raise ConfigError("sampler.proposal_t", "proposal time must be positive")
        if self.proposal_center not in (None,) + PROPOSAL_CENTERS:
            raise ConfigError("sampler.proposal_center",
                              f"expected one of {PROPOSAL_CENTERS}, got {self.proposal_center!r}")
        if self.calibration_points < 1:
            raise ConfigError("sampler.calibration_points", "need at least one grid point")
        if isinstance(self.mbi_oracle, GeodesicRandomWalk) and self.mbi_oracle.substeps < 1:
            raise ConfigError("sampler.mbi_substeps", "geodesic random walk needs >= 1 substep")


@dataclass(frozen=True)
class TheoryParams:
    """LSI constant estimate and Ricci lower bound; bookkeeping only."""

    alpha: float
    kappa: float

    @classmethod
    def for_manifold(cls, manifold: Manifold, alpha: float = 0.0) -> "TheoryParams":
        if alpha < 0.0:
            raise ConfigError("theory.alpha", "LSI constant must be >= 0")
        if isinstance(manifold, Circle):
            kappa = 0.0
        elif isinstance(manifold, Sphere):
            kappa = float(manifold.d - 1)
        elif isinstance(manifold, SPD):
            m = manifold.m
            kappa = -(m * (m + 1) - 1) / 4.0
        else:
            raise ConfigError("theory.kappa", f"no curvature table entry for {manifold}")
        return cls(alpha=alpha, kappa=kappa)


@dataclass(frozen=True)
class VaradhanParameters:
    eta: float
    t: float
    T: float
    c_eps: float


def varadhan_parameters(L1: float, dim: int, epsilon: float) -> VaradhanParameters:
    """eta = C/(L1^2 d), t = C/(L1^2 (d-1)), T = C/(L1^2 (d+1)) with C = 1/log(1/epsilon)."""
    if not 0.0 < epsilon < 1.0:
        raise ConfigError("sampler.epsilon", f"accuracy must lie in (0, 1), got {epsilon}")
    if not L1 > 0.0:
        raise ConfigError("target.L1", "Lipschitz constant must be positive")
    c_eps = 1.0 / math.log(1.0 / epsilon)
    scale = c_eps / L1**2
    eta = scale / dim
    t = oracles.varadhan_proposal_time(eta, dim)
    return VaradhanParameters(eta=eta, t=t, T=scale / (dim + 1), c_eps=c_eps)


def expected_rejection_bound(dim: int, c_eps: float) -> float:
    """e^{C+1} ((d+1)/(d-1))^{d/2} / (1 - e^{-1/2}) on S^d, d >= 2."""
    if dim < 2:
        raise ConfigError("sampler.dim", "the rejection bound needs d >= 2")
    return math.exp(c_eps + 1.0) * ((dim + 1.0) / (dim - 1.0)) ** (dim / 2.0) / (1.0 - math.exp(-0.5))


# =============================
# Oracle resolution
# =============================

@dataclass(frozen=True)
class ResolvedSampler:
    cfg: SamplerConfig
    kernel: Optional[HeatKernelSpec]
    fallbacks: int = 0


def resolve_sampler(manifold: Manifold, cfg: SamplerConfig) -> ResolvedSampler:
    """Build the truncated kernel the oracles need, falling back to Varadhan when
    the series is out of reach (spheres below SERIES_MIN_TIME or no level found)."""
    wants_series = isinstance(cfg.mbi_oracle, SeriesRejection) or isinstance(
        cfg.rhk_oracle, TruncatedKernelRejection
    )
    if not wants_series:
        return ResolvedSampler(cfg, None)
    if not isinstance(manifold, (Circle, Sphere)):
        raise ConfigError("sampler.oracle", f"series oracles are not available on {manifold}")

    level = _requested_level(cfg)
    kernel = None
    reason = ""
    if isinstance(manifold, Sphere) and level is None and cfg.eta < SERIES_MIN_TIME:
        reason = f"eta={cfg.eta:g} is below {SERIES_MIN_TIME}"
    else:
        try:
            if level is not None:
                kernel = HeatKernelSpec(manifold, cfg.eta, level)
            else:
                kernel = HeatKernelSpec.for_accuracy(manifold, cfg.eta, cfg.zeta)
        except NoTruncationLevelError as exc:
            reason = str(exc)
    if kernel is not None:
        logger.debug("heat kernel on %s: t=%g, level=%d", manifold, kernel.t, kernel.level)
        return ResolvedSampler(cfg, kernel)

    fallbacks = 0
    mbi, rhk = cfg.mbi_oracle, cfg.rhk_oracle
    if isinstance(mbi, SeriesRejection):
        mbi, fallbacks = RGaussianVaradhan(), fallbacks + 1
    if isinstance(rhk, TruncatedKernelRejection):
        rhk, fallbacks = VaradhanRejection(), fallbacks + 1
    logger.warning("series oracles replaced by Varadhan oracles: %s", reason)
    return ResolvedSampler(replace(cfg, mbi_oracle=mbi, rhk_oracle=rhk), None, fallbacks)


def _requested_level(cfg: SamplerConfig) -> Optional[int]:
    levels = {
        o.level for o in (cfg.mbi_oracle, cfg.rhk_oracle)
        if isinstance(o, (SeriesRejection, TruncatedKernelRejection)) and o.level is not None
    }
    if len(levels) > 1:
        raise ConfigError("sampler.level", f"MBI and RHK oracles ask for different levels {levels}")
    return levels.pop() if levels else None


# =============================
# One step
# =============================

@dataclass
class StepCounters:
    mbi_rejections: np.ndarray
    rhk_rejections: np.ndarray
    clamps: int = 0
    excursions: int = 0
    failed: np.ndarray = None


def proximal_step(
    xs: np.ndarray,
    target: TargetSpec,
    cfg: SamplerConfig,
    kernel: Optional[HeatKernelSpec],
    rng: np.random.Generator,
    raise_on_cap: bool = True,
) -> Tuple[np.ndarray, np.ndarray, StepCounters]:
    """(y, x_next, counters) for a batch of chain states xs."""
    manifold = target.manifold
    xs = np.asarray(xs, dtype=float)
    eta = cfg.eta

    mbi = cfg.mbi_oracle
    if isinstance(mbi, SeriesRejection):
        _need_kernel(kernel, "series MBI oracle")
        first = oracles.mbi_series_rejection(xs, eta, kernel, cfg, rng, raise_on_cap)
    elif isinstance(mbi, GeodesicRandomWalk):
        first = oracles.mbi_geodesic_random_walk(xs, eta, mbi.substeps, manifold, rng)
    elif isinstance(mbi, RGaussianVaradhan):
        first = oracles.mbi_riemannian_gaussian(xs, eta, manifold, cfg, rng, raise_on_cap)
    else:
        raise ConfigError("sampler.mbi_oracle", f"unknown MBI oracle {mbi!r}")

    rhk = cfg.rhk_oracle
    ys = first.points
    if isinstance(rhk, TruncatedKernelRejection):
        _need_kernel(kernel, "truncated-kernel RHK oracle")
        second = oracles.rhk_truncated_rejection(ys, eta, target, kernel, cfg, rng, raise_on_cap)
    elif isinstance(rhk, VaradhanRejection):
        second = oracles.rhk_varadhan_rejection(ys, eta, target, cfg, rng, raise_on_cap)
    else:
        raise ConfigError("sampler.rhk_oracle", f"unknown RHK oracle {rhk!r}")

    counters = StepCounters(
        mbi_rejections=first.rejections,
        rhk_rejections=second.rejections,
        clamps=first.clamps + second.clamps,
        excursions=first.excursions + second.excursions,
        failed=first.failed | second.failed,
    )
    return ys, second.points, counters


def _need_kernel(kernel, what):
    if kernel is None:
        raise ConfigError("sampler.level", f"{what} needs a heat-kernel specification")


# =============================
# Chains
# =============================

@dataclass
class ChainTrace:
    """States have shape (n_iters + 1, n_chains) + point_shape."""

    states: np.ndarray
    mbi_rejections: np.ndarray
    rhk_rejections: np.ndarray
    clamp_events: int
    seed: int
    excursions: int = 0
    fallbacks: int = 0
    failed: np.ndarray = None
    elapsed_ms: float = 0.0
    manifold: Optional[Manifold] = field(default=None, repr=False)
    peak_distance: Optional[np.ndarray] = None

    @property
    def n_iters(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_chains(self) -> int:
        return self.states.shape[1]

    def point(self, iteration: int, chain: int = 0) -> Point:
        return Point(self.manifold, self.states[iteration, chain])


def run_chain(
    init: Point,
    n_iters: int,
    target: TargetSpec,
    cfg: SamplerConfig,
    kernel: Optional[HeatKernelSpec] = None,
    seed: int = 0,
) -> ChainTrace:
    """Single chain; deterministic given seed."""
    if init.kind != target.manifold:
        raise ConfigError("init", f"initial point on {init.kind}, target on {target.manifold}")
    return run_chains(init.coords[None], n_iters, target, cfg, seed=seed, kernel=kernel,
                      block_size=1, fail_fast=True)


def run_chains(
    inits: np.ndarray,
    n_iters: int,
    target: TargetSpec,
    cfg: SamplerConfig,
    seed: int = 0,
    kernel: Optional[HeatKernelSpec] = None,
    block_size: int = 250,
    workers: int = 1,
    fail_fast: bool = False,
) -> ChainTrace:
    """Independent chains from `inits`; block b of chains uses stream b.

    With fail_fast off, chains whose oracle hits its cap or fails numerically
    are frozen and flagged instead of aborting the run.
    """
    if n_iters < 1:
        raise ConfigError("iters", f"need at least one iteration, got {n_iters}")
    manifold = target.manifold
    inits = np.asarray(inits, dtype=float)
    n = manifold.batch_shape(inits)[0]
    if kernel is None:
        resolved = resolve_sampler(manifold, cfg)
    else:
        resolved = ResolvedSampler(cfg, kernel)

    started = time.perf_counter()
    blocks = block_slices(n, block_size)

    def work(b):
        lo, hi = blocks[b]
        return _run_block(inits[lo:hi], n_iters, target, resolved, chain_stream(seed, b), fail_fast)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(len(blocks))))
    else:
        parts = [work(b) for b in range(len(blocks))]

    trace = ChainTrace(
        states=np.concatenate([p.states for p in parts], axis=1),
        mbi_rejections=np.concatenate([p.mbi_rejections for p in parts], axis=1),
        rhk_rejections=np.concatenate([p.rhk_rejections for p in parts], axis=1),
        clamp_events=sum(p.clamp_events for p in parts),
        seed=seed,
        excursions=sum(p.excursions for p in parts),
        fallbacks=resolved.fallbacks,
        failed=np.concatenate([p.failed for p in parts]),
        elapsed_ms=1000.0 * (time.perf_counter() - started),
        manifold=manifold,
    )
    if np.any(trace.failed):
        logger.warning("%d of %d chains flagged as failed", int(np.sum(trace.failed)), n)
    if trace.clamp_events:
        logger.warning("%d truncated-kernel values clamped", trace.clamp_events)
    if trace.excursions:
        logger.warning("%d clipped acceptance excursions above one", trace.excursions)
    return trace


def _run_block(inits, n_iters, target, resolved: ResolvedSampler, rng, fail_fast) -> ChainTrace:
    cfg, kernel = resolved.cfg, resolved.kernel
    k = inits.shape[0]
    states = np.empty((n_iters + 1,) + inits.shape)
    states[0] = inits
    mbi_rej = np.zeros((n_iters, k), dtype=np.int64)
    rhk_rej = np.zeros((n_iters, k), dtype=np.int64)
    failed = np.zeros(k, dtype=bool)
    clamps = excursions = 0
    x = inits.copy()
    for it in range(n_iters):
        live = np.flatnonzero(~failed)
        if live.size:
            _, x_next, counters = _safe_step(x[live], target, cfg, kernel, rng, fail_fast)
            bad = counters.failed | ~_finite_rows(x_next)
            x_next = np.where(_expand(bad, x_next), x[live], x_next)
            x[live] = x_next
            failed[live[bad]] = True
            mbi_rej[it, live] = counters.mbi_rejections
            rhk_rej[it, live] = counters.rhk_rejections
            clamps += counters.clamps
            excursions += counters.excursions
        states[it + 1] = x
        if (it + 1) % 10 == 0:
            logger.info("iteration %d/%d, %d of %d chains live", it + 1, n_iters, int(np.sum(~failed)), k)
    return ChainTrace(states, mbi_rej, rhk_rej, clamps, seed=0, excursions=excursions, failed=failed)


def _safe_step(xs, target, cfg, kernel, rng, fail_fast):
    """proximal_step on the batch; on a numerical failure, retry row by row.

    Rows that still raise come back unchanged with failed set, so one broken
    chain does not take the rest of its block down with it.
    """
    try:
        return proximal_step(xs, target, cfg, kernel, rng, raise_on_cap=fail_fast)
    except NumericalError as exc:
        if fail_fast:
            raise
        logger.warning("batched step over %d chains failed (%s), retrying per chain", xs.shape[0], exc)
    k = xs.shape[0]
    ys = np.full_like(xs, np.nan)
    x_next = xs.copy()
    counters = StepCounters(
        mbi_rejections=np.zeros(k, dtype=np.int64),
        rhk_rejections=np.zeros(k, dtype=np.int64),
        failed=np.zeros(k, dtype=bool),
    )
    for i in range(k):
        try:
            y_i, x_i, c_i = proximal_step(xs[i:i + 1], target, cfg, kernel, rng, raise_on_cap=False)
        except NumericalError as exc:
            logger.warning("chain %d of the block failed: %s", i, exc)
            counters.failed[i] = True
            continue
        ys[i], x_next[i] = y_i[0], x_i[0]
        counters.mbi_rejections[i] = c_i.mbi_rejections[0]
        counters.rhk_rejections[i] = c_i.rhk_rejections[0]
        counters.failed[i] = c_i.failed[0]
        counters.clamps += c_i.clamps
        counters.excursions += c_i.excursions
    return ys, x_next, counters


def _finite_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 1:
        return np.isfinite(x)
    return np.all(np.isfinite(x.reshape(x.shape[0], -1)), axis=1)


def initial_points(manifold: Manifold, n: int, how: str, rng: np.random.Generator,
                   point=None, radius: float = 1.0) -> np.ndarray:
    """Starting states: 'uniform', 'point' (explicit coordinates) or 'radius' (SPD)."""
    if how == "uniform":
        return manifold.random_uniform(n, rng)
    if how == "point":
        p = Point(manifold, np.asarray(point, dtype=float))
        return np.broadcast_to(p.coords, (n,) + manifold.point_shape).copy()
    if how == "radius":
        if not isinstance(manifold, SPD):
            raise ConfigError("init", "'radius' initialisation is defined on SPD only")
        # exp_I(radius * D / |D|) with D = diag(1, -1, 0, ...)
        direction = np.zeros(manifold.m)
        direction[0], direction[1] = 1.0, -1.0
        direction *= radius / np.linalg.norm(direction)
        return np.broadcast_to(np.diag(np.exp(direction)), (n,) + manifold.point_shape).copy()
    raise ConfigError("init", f"unknown initialisation {how!r}")


def chain_summaries(trace: ChainTrace) -> List[dict]:
    """Per-iteration mean rejection counts (iteration 0 has none)."""
    rows = [{"iter": 0, "mbi_rej_mean": 0.0, "rhk_rej_mean": 0.0}]
    for it in range(trace.n_iters):
        rows.append({
            "iter": it + 1,
            "mbi_rej_mean": float(np.mean(trace.mbi_rejections[it])),
            "rhk_rej_mean": float(np.mean(trace.rhk_rejections[it])),
        })
    return rows
