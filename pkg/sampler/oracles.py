"""
Oracles for the two half-steps of the proximal sampler.

MBI (Manifold Brownian Increment): y ~ nu(eta, x, .)
    mbi_series_rejection       exact up to truncation, Riemannian Gaussian proposal
    mbi_geodesic_random_walk   n exp-map substeps of time eta / n
    mbi_riemannian_gaussian    Varadhan surrogate mu(eta, x, .)

RHK (Riemannian Heat Kernel): x ~ exp(-f(x)) nu(eta, x, y)
    rhk_truncated_rejection    truncated kernel, proposal around x* or y
    rhk_varadhan_rejection     surrogate exp(-f(x) - d(x, y)^2 / (2 eta))

All oracles are batched: row i of the input is chain i. Every rejection
sampler accepts with probability min(1, V); V is made <= 1 either
analytically or by calibrating an additive constant in log V.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import gaussian
from .errors import ConfigError, CutLocusError, KernelNonpositiveError, UnsupportedManifoldError
from .heat_kernel import HeatKernelSpec
from .manifolds import Circle, Manifold, Sphere
from .optim import _expand, rhk_find_mode, rhk_objective
from .rejection import rejection_sample
from .targets import TargetSpec

if TYPE_CHECKING:
    from .proximal import SamplerConfig

logger = logging.getLogger(__name__)

CALIBRATION_POINTS = 4096
CALIBRATION_REFINEMENTS = 50
_GRID_BUDGET = 1 << 20


@dataclass
class OracleDraw:
    points: np.ndarray
    rejections: np.ndarray
    clamps: int = 0
    excursions: int = 0
    failed: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.failed is None:
            self.failed = np.zeros(len(self.rejections), dtype=bool)


@dataclass
class ClampCounter:
    count: int = 0


def proposal_scale(manifold: Manifold) -> float:
    """s = d / (d - 1) for the MBI proposal time t = s * eta (s = 2 on S^1)."""
    dim = manifold.dim
    return 2.0 if dim == 1 else dim / (dim - 1.0)


def _require_radial(manifold: Manifold, what: str) -> None:
    if not isinstance(manifold, (Circle, Sphere)):
        raise UnsupportedManifoldError(f"{what} needs a circle or sphere, got {manifold}")


# =============================
# MBI oracles
# =============================

@lru_cache(maxsize=64)
def calibrate_mbi_constant(kernel: HeatKernelSpec, t: float,
                           points: int = CALIBRATION_POINTS) -> float:
    """C_MBI = -max_r [log nu_l(r) - log nu_l(0) + r^2 / (2t)] over [0, pi]."""
    log0 = float(kernel.radial_log_density(0.0)[0])

    def h(r):
        return kernel.radial_log_density(r)[0] - log0 + np.asarray(r) ** 2 / (2.0 * t)

    r = np.linspace(0.0, math.pi, points)
    values = h(r)
    i = int(np.argmax(values))
    best = float(values[i])
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, points - 1)]
    if hi > lo:
        res = minimize_scalar(lambda s: -float(h(s)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    logger.debug("MBI calibration: max log V %.6g at t=%.4g", best, t)
    return -best


def mbi_series_rejection(
    xs: np.ndarray,
    eta: float,
    kernel: HeatKernelSpec,
    cfg: "SamplerConfig",
    rng: np.random.Generator,
    raise_on_cap: bool = True,
) -> OracleDraw:
    """y ~ nu_l(eta, x, .) with V = nu_l(eta, x, y) / nu_l(eta, x, x) e^{C + d^2/(2t)}."""
    manifold = kernel.manifold
    _require_radial(manifold, "series MBI oracle")
    if not math.isclose(kernel.t, eta):
        raise ValueError(f"kernel time {kernel.t} does not match step size {eta}")
    xs = np.asarray(xs, dtype=float)
    n = manifold.batch_shape(xs)[0]
    t = cfg.proposal_t if cfg.proposal_t is not None else proposal_scale(manifold) * eta
    const = calibrate_mbi_constant(kernel, t, cfg.calibration_points)
    log0 = float(kernel.radial_log_density(0.0)[0])
    clamps = ClampCounter()

    def propose(idx, rng):
        centers = xs[idx]
        ys = gaussian.draw(manifold, centers, t, rng, cap=cfg.rejection_cap)
        r = manifold.dist(centers, ys)
        log_nu, k = kernel.radial_log_density(r)
        clamps.count += k
        return ys, log_nu - log0 + const + r**2 / (2.0 * t)

    res = rejection_sample(
        n, manifold.point_shape, propose, rng,
        cap=cfg.rejection_cap, clip=cfg.clip_acceptance,
        what="MBI series oracle", raise_on_cap=raise_on_cap,
    )
    return _draw_from(res, xs, clamps.count)


def mbi_geodesic_random_walk(xs: np.ndarray, eta: float, substeps: int,
                             manifold: Manifold, rng: np.random.Generator) -> OracleDraw:
    if substeps < 1:
        raise ConfigError("sampler.mbi_substeps", "geodesic random walk needs >= 1 substep")
    y = np.array(xs, dtype=float)
    for _ in range(substeps):
        y = manifold.exp(y, manifold.random_tangent(y, eta / substeps, rng))
    return OracleDraw(points=y, rejections=np.zeros(manifold.batch_shape(y)[0], dtype=np.int64))


def mbi_riemannian_gaussian(xs: np.ndarray, eta: float, manifold: Manifold,
                            cfg: "SamplerConfig", rng: np.random.Generator,
                            raise_on_cap: bool = True) -> OracleDraw:
    res = gaussian.sample_batch(manifold, xs, eta, rng, cap=cfg.rejection_cap,
                                raise_on_cap=raise_on_cap)
    return _draw_from(res, xs, 0)


# =============================
# RHK calibration
# =============================

def calibrate_rhk_constants(
    target: TargetSpec,
    ys: np.ndarray,
    centers: np.ndarray,
    eta: float,
    t: float,
    kernel: Optional[HeatKernelSpec] = None,
    points: int = CALIBRATION_POINTS,
    refinements: int = CALIBRATION_REFINEMENTS,
) -> np.ndarray:
    """Per-chain C = -max_x [-g(x) + g(center) + d(x, center)^2 / (2t)].

    The maximum is taken over a low-discrepancy grid of the manifold and then
    improved by gradient ascent from the best grid point.
    """
    manifold = target.manifold
    n = manifold.batch_shape(ys)[0]
    grid = manifold.low_discrepancy_points(points)
    g_full, grad_full = rhk_objective(target, ys, eta, kernel)
    g_center = g_full(centers)

    best = np.empty(n)
    start = np.empty_like(np.asarray(centers, dtype=float))
    chunk = max(1, _GRID_BUDGET // points)
    for lo in range(0, n, chunk):
        sl = slice(lo, min(lo + chunk, n))
        g_grid, _ = rhk_objective(target, ys[sl][:, None], eta, kernel)
        d2 = manifold.dist(grid[None], centers[sl][:, None]) ** 2
        h = -g_grid(grid[None]) + g_center[sl][:, None] + d2 / (2.0 * t)
        i = np.argmax(h, axis=1)
        best[sl] = h[np.arange(h.shape[0]), i]
        start[sl] = grid[i]

    def h_full(x):
        return -g_full(x) + g_center + manifold.dist(x, centers) ** 2 / (2.0 * t)

    x = start
    step = 1.0 / (1.0 / eta + 1.0 / t + target.L1)
    try:
        for _ in range(refinements):
            ascent = -grad_full(x) - manifold.log(x, centers) / t
            x = manifold.exp(x, step * ascent)
            hx = h_full(x)
            best = np.maximum(best, np.where(np.isfinite(hx), hx, -np.inf))
    except (CutLocusError, KernelNonpositiveError) as exc:
        logger.debug("calibration refinement stopped early: %s", exc)
    return -best


def _proposal_time(cfg: "SamplerConfig", default: float) -> float:
    return cfg.proposal_t if cfg.proposal_t is not None else default


# =============================
# RHK oracles
# =============================

def rhk_truncated_rejection(
    ys: np.ndarray,
    eta: float,
    target: TargetSpec,
    kernel: HeatKernelSpec,
    cfg: "SamplerConfig",
    rng: np.random.Generator,
    raise_on_cap: bool = True,
) -> OracleDraw:
    """x ~ exp(-f(x)) nu_l(eta, x, y) with a Riemannian Gaussian proposal."""
    manifold = target.manifold
    _require_radial(manifold, "truncated-kernel RHK oracle")
    ys = np.asarray(ys, dtype=float)
    n = manifold.batch_shape(ys)[0]
    t = _proposal_time(cfg, proposal_scale(manifold) * eta)
    center_kind = cfg.proposal_center or "mode"
    if center_kind == "mode":
        centers = rhk_find_mode(target, ys, eta, kernel, cfg.mode_options).x
    else:
        centers = ys
    const = calibrate_rhk_constants(target, ys, centers, eta, t, kernel,
                                    cfg.calibration_points, cfg.calibration_refinements)
    clamps = ClampCounter()
    return _rhk_rejection(manifold, target, ys, centers, const, eta, t, kernel, clamps, cfg, rng,
                          "truncated-kernel RHK oracle", raise_on_cap, n)


def rhk_varadhan_rejection(
    ys: np.ndarray,
    eta: float,
    target: TargetSpec,
    cfg: "SamplerConfig",
    rng: np.random.Generator,
    raise_on_cap: bool = True,
) -> OracleDraw:
    """x ~ exp(-f(x) - d(x, y)^2 / (2 eta)).

    Anchor-centred (default): proposal mu(t, y, .) with
    V = exp(-f(x) + f(y) - d^2/(2 eta) - offset + d^2/(2t)), and
    offset = L1^2 / (2 (1/eta - 1/t)) bounds V by one for L1-Lipschitz f.
    Mode-centred: proposal mu(t, x*, .); on compact manifolds the constant is
    calibrated, on SPD a geodesically convex f makes g (1/eta)-strongly
    convex so t = eta and a zero constant already give V <= 1.
    """
    manifold = target.manifold
    ys = np.asarray(ys, dtype=float)
    n = manifold.batch_shape(ys)[0]
    center_kind = cfg.proposal_center or "anchor"
    clamps = ClampCounter()

    if center_kind == "anchor":
        t = _proposal_time(cfg, varadhan_proposal_time(eta, manifold.dim))
        if cfg.varadhan_offset is not None:
            offset = cfg.varadhan_offset
            if t < eta:
                raise ConfigError("sampler.proposal_t", f"proposal time {t} below step size {eta}")
        else:
            if t <= eta:
                raise ConfigError("sampler.proposal_t",
                                  f"anchor-centred proposal needs t > eta ({t} <= {eta})")
            offset = target.L1**2 / (2.0 * (1.0 / eta - 1.0 / t))
        f_y = target.value(ys)

        def propose(idx, rng):
            centers = ys[idx]
            xs = gaussian.draw(manifold, centers, t, rng, cap=cfg.rejection_cap)
            d2 = manifold.dist(xs, centers) ** 2
            log_v = -target.value(xs) + f_y[idx] - d2 / (2.0 * eta) - offset + d2 / (2.0 * t)
            return xs, log_v

        res = rejection_sample(
            n, manifold.point_shape, propose, rng,
            cap=cfg.rejection_cap, clip=cfg.clip_acceptance,
            what="Varadhan RHK oracle", raise_on_cap=raise_on_cap,
        )
        return _draw_from(res, ys, 0)

    centers = rhk_find_mode(target, ys, eta, None, cfg.mode_options).x
    if manifold.compact:
        t = _proposal_time(cfg, proposal_scale(manifold) * eta)
        const = calibrate_rhk_constants(target, ys, centers, eta, t, None,
                                        cfg.calibration_points, cfg.calibration_refinements)
    else:
        if not target.convex:
            raise UnsupportedManifoldError(
                f"mode-centred Varadhan oracle on {manifold} needs a geodesically convex potential"
            )
        t = _proposal_time(cfg, eta)
        if t < eta:
            raise ConfigError("sampler.proposal_t", f"proposal time {t} below step size {eta}")
        const = np.zeros(n)
    return _rhk_rejection(manifold, target, ys, centers, const, eta, t, None, clamps, cfg, rng,
                          "Varadhan RHK oracle", raise_on_cap, n)


def varadhan_proposal_time(eta: float, dim: int) -> float:
    """t = eta * d / (d - 1), i.e. C/(L1^2 (d-1)) when eta = C/(L1^2 d); 2 eta on S^1."""
    return 2.0 * eta if dim == 1 else eta * dim / (dim - 1.0)


def _rhk_rejection(manifold, target, ys, centers, const, eta, t, kernel, clamps, cfg, rng,
                   what, raise_on_cap, n) -> OracleDraw:
    g_full, _ = rhk_objective(target, ys, eta, kernel)
    g_center = g_full(centers)

    def propose(idx, rng):
        c = centers[idx]
        xs = gaussian.draw(manifold, c, t, rng, cap=cfg.rejection_cap)
        g_idx, _ = rhk_objective(target, ys[idx], eta, kernel)
        if kernel is not None:
            _, k = kernel.log_density(xs, ys[idx])
            clamps.count += k
        log_v = -g_idx(xs) + g_center[idx] + const[idx] + manifold.dist(xs, c) ** 2 / (2.0 * t)
        return xs, log_v

    res = rejection_sample(
        n, manifold.point_shape, propose, rng,
        cap=cfg.rejection_cap, clip=cfg.clip_acceptance, what=what, raise_on_cap=raise_on_cap,
    )
    return _draw_from(res, ys, clamps.count)


def _draw_from(res, fallback: np.ndarray, clamps: int) -> OracleDraw:
    """Failed items keep their input point so the chain state stays valid."""
    points = np.where(_expand(res.failed, res.samples), fallback, res.samples)
    return OracleDraw(points=points, rejections=res.rejections, clamps=clamps,
                      excursions=res.excursions, failed=res.failed)

