"""
Brownian-motion densities on the circle and on hyperspheres.

Brownian motion here has generator (1/2) * Laplacian, so on the circle the
heat kernel is the wrapped Gaussian of variance t and on S^d it is the
Gegenbauer series

    nu_l(t, c) = sum_{k<=l} exp(-k(k+d-1)t/2) (2k+d-1) / ((d-1) A_{S^d}) C_k^{(d-1)/2}(c)

evaluated at the inner product c = <x, y> (the cosine of the geodesic distance).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import (
    CutLocusError,
    KernelNonpositiveError,
    NoTruncationLevelError,
    UnsupportedManifoldError,
)
from .manifolds import ANTIPODAL_TOL, Circle, Manifold, Sphere

logger = logging.getLogger(__name__)

CLAMP_FLOOR = 1e-300
MAX_LEVEL = 10**6
SERIES_MIN_TIME = 0.05
TAIL_RELATIVE_STOP = 1e-18
_TAIL_CHUNK = 512


def sphere_area(n: int) -> float:
    """Surface area of the unit n-sphere S^n in R^{n+1}."""
    return math.exp(_log_sphere_area(n))


def _log_sphere_area(n: int) -> float:
    h = 0.5 * (n + 1)
    return math.log(2.0) + h * math.log(math.pi) - float(gammaln(h))


# =============================
# Circle
# =============================

def _wrap_offsets(n_max: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(-n_max, n_max + 1)


def circle_kernel(t: float, phi, n_max: int) -> np.ndarray:
    """Wrapped Gaussian sum_{|n|<=n_max} (2 pi t)^{-1/2} exp(-(phi + 2 pi n)^2 / (2t))."""
    _check_time(t)
    phi = np.asarray(phi, dtype=float)
    shifted = phi[..., None] + _wrap_offsets(n_max)
    return np.sum(np.exp(-shifted**2 / (2.0 * t)), axis=-1) / math.sqrt(2.0 * math.pi * t)


def circle_log_kernel(t: float, phi, n_max: int) -> np.ndarray:
    _check_time(t)
    phi = np.asarray(phi, dtype=float)
    shifted = phi[..., None] + _wrap_offsets(n_max)
    return logsumexp(-shifted**2 / (2.0 * t), axis=-1) - 0.5 * math.log(2.0 * math.pi * t)


def circle_log_kernel_derivative(t: float, phi, n_max: int) -> np.ndarray:
    """d/dphi log nu(t, phi) for the signed angle difference phi."""
    _check_time(t)
    phi = np.asarray(phi, dtype=float)
    shifted = phi[..., None] + _wrap_offsets(n_max)
    logw = -shifted**2 / (2.0 * t)
    w = np.exp(logw - np.max(logw, axis=-1, keepdims=True))
    return -np.sum(w * shifted, axis=-1) / (t * np.sum(w, axis=-1))


def circle_kernel_fourier(t: float, phi, n_terms: int = 200) -> np.ndarray:
    """Poisson-dual form (1/2pi)(1 + 2 sum_k exp(-k^2 t/2) cos(k phi))."""
    _check_time(t)
    phi = np.asarray(phi, dtype=float)
    k = np.arange(1, n_terms + 1)
    series = np.sum(np.exp(-(k**2) * t / 2.0) * np.cos(phi[..., None] * k), axis=-1)
    return (1.0 + 2.0 * series) / (2.0 * math.pi)


def circle_tail_bound(t: float, n_max: int) -> float:
    """Upper bound on the omitted wraps for any phi in [0, pi]."""
    _check_time(t)
    n = np.arange(n_max + 1, n_max + 64)
    terms = np.exp(-((2.0 * math.pi * n - math.pi) ** 2) / (2.0 * t))
    return float(2.0 * np.sum(terms) / math.sqrt(2.0 * math.pi * t))


def choose_wraps(t: float, zeta: float, max_wraps: int = 10_000) -> int:
    """Smallest wrap count n_max >= 1 whose omitted tail is below zeta."""
    if not zeta > 0.0:
        raise ValueError(f"accuracy must be positive, got {zeta}")
    for n_max in range(1, max_wraps + 1):
        if circle_tail_bound(t, n_max) <= zeta:
            return n_max
    raise NoTruncationLevelError(f"no wrap count up to {max_wraps} reaches {zeta:g} at t={t:g}")


# =============================
# Spheres
# =============================

def _check_sphere_dim(d: int) -> None:
    if d < 2:
        raise UnsupportedManifoldError(
            f"sphere series needs d >= 2 (got {d}); use circle_kernel on S^1"
        )


def _check_time(t: float) -> None:
    if not t > 0.0:
        raise ValueError(f"diffusion time must be positive, got {t}")


def series_coefficients(d: int, t: float, level: int) -> np.ndarray:
    """exp(-k(k+d-1)t/2) (2k+d-1) / ((d-1) A_{S^d}) for k = 0..level."""
    _check_sphere_dim(d)
    _check_time(t)
    if level < 0:
        raise ValueError(f"truncation level must be >= 0, got {level}")
    k = np.arange(level + 1, dtype=float)
    log_coeff = (
        -k * (k + d - 1) * t / 2.0
        + np.log(2.0 * k + d - 1)
        - math.log(d - 1)
        - _log_sphere_area(d)
    )
    return np.exp(log_coeff)


def gegenbauer_sum(c, alpha: float, coeffs: np.ndarray) -> np.ndarray:
    """sum_k coeffs[k] C_k^alpha(c) by the three-term recurrence (no table kept)."""
    c = np.asarray(c, dtype=float)
    # skip the underflowed tail of the coefficients
    nonzero = np.flatnonzero(coeffs)
    last = int(nonzero[-1]) if nonzero.size else -1
    total = np.zeros_like(c)
    if last < 0:
        return total
    prev2 = np.ones_like(c)
    total = total + coeffs[0] * prev2
    if last == 0:
        return total
    prev1 = 2.0 * alpha * c
    total = total + coeffs[1] * prev1
    for k in range(2, last + 1):
        current = (2.0 * (k + alpha - 1.0) * c * prev1 - (k + 2.0 * alpha - 2.0) * prev2) / k
        total += coeffs[k] * current
        prev2, prev1 = prev1, current
    return total


def sphere_kernel(d: int, t: float, c, level: int) -> np.ndarray:
    """Truncated heat kernel nu_l on S^d at inner product c (may dip below 0 for small l)."""
    coeffs = series_coefficients(d, t, level)
    c = np.clip(np.asarray(c, dtype=float), -1.0, 1.0)
    return gegenbauer_sum(c, 0.5 * (d - 1), coeffs)


def sphere_kernel_dc(d: int, t: float, c, level: int) -> np.ndarray:
    """d/dc nu_l via dC_k^a/dc = 2a C_{k-1}^{a+1}."""
    coeffs = series_coefficients(d, t, level)
    alpha = 0.5 * (d - 1)
    c = np.clip(np.asarray(c, dtype=float), -1.0, 1.0)
    if level == 0:
        return np.zeros_like(c)
    return gegenbauer_sum(c, alpha + 1.0, 2.0 * alpha * coeffs[1:])


def sphere_kernel_grad(d: int, t: float, c, level: int) -> np.ndarray:
    """Derivative of log nu_l with respect to the inner product c."""
    value = sphere_kernel(d, t, c, level)
    if np.any(value <= 0.0):
        raise KernelNonpositiveError(
            f"nu_l is nonpositive (min {np.min(value):.3g}) at d={d}, t={t:g}, l={level}"
        )
    return sphere_kernel_dc(d, t, c, level) / value


def varadhan_log_kernel(manifold: Manifold, t: float, x, y) -> np.ndarray:
    """Small-time surrogate log nu ~ -d(x, y)^2 / (2t)."""
    _check_time(t)
    if isinstance(manifold, Sphere):
        c = np.sum(np.asarray(x, dtype=float) * np.asarray(y, dtype=float), axis=-1)
        if np.any(c <= -1.0 + ANTIPODAL_TOL):
            raise CutLocusError("Varadhan kernel requested at an antipodal pair")
    return -manifold.dist(x, y) ** 2 / (2.0 * t)


# =============================
# Truncation control
# =============================

@dataclass(frozen=True)
class TailBound:
    level: int
    bound: float
    M_values: np.ndarray = field(repr=False)


def _log_gegenbauer_envelope(d: int, k: np.ndarray) -> np.ndarray:
    """log M_k with M_k = A_k + |B_k - A_k|, evaluated without overflow."""
    a = gammaln((k + d - 1) / 2.0) - gammaln((d - 1) / 2.0) - gammaln(k / 2.0 + 1.0)
    b = gammaln(k + d - 1.0) - gammaln(d - 1.0) - gammaln(k + 1.0)
    # b >= a: M = B; otherwise M = 2A - B
    with np.errstate(over="ignore"):
        below = a + np.log(np.maximum(2.0 - np.exp(np.minimum(b - a, 0.0)), 1.0))
    return np.where(b >= a, b, below)


def truncation_tail_bound(d: int, t: float, level: int) -> TailBound:
    """Upper bound on sup_c |nu - nu_l| from the Gegenbauer envelopes M_k, k > l."""
    _check_sphere_dim(d)
    _check_time(t)
    if level < 0:
        raise ValueError(f"truncation level must be >= 0, got {level}")
    log_norm = math.log(d - 1) + _log_sphere_area(d)
    log_terms: List[np.ndarray] = []
    log_m: List[np.ndarray] = []
    start = level + 1
    total = -np.inf
    while True:
        k = np.arange(start, start + _TAIL_CHUNK, dtype=float)
        lm = _log_gegenbauer_envelope(d, k)
        lt = -k * (k + d - 1) * t / 2.0 + np.log(2.0 * k + d - 1) + lm - log_norm
        log_terms.append(lt)
        log_m.append(lm)
        total = float(np.logaddexp(total, logsumexp(lt)))
        decreasing = lt[-1] < lt[-2]
        negligible = lt[-1] < total + math.log(TAIL_RELATIVE_STOP) or lt[-1] < -745.0
        if decreasing and negligible:
            break
        start += _TAIL_CHUNK
    m_values = np.exp(np.concatenate(log_m))
    bound = math.exp(total) if np.isfinite(total) else 0.0
    return TailBound(level=level, bound=bound, M_values=m_values)


def choose_truncation(d: int, t: float, zeta: float, max_level: int = MAX_LEVEL) -> int:
    """Smallest level l <= max_level with tail bound <= zeta (bound is monotone in l)."""
    if not zeta > 0.0:
        raise ValueError(f"accuracy must be positive, got {zeta}")

    def ok(level: int) -> bool:
        return truncation_tail_bound(d, t, level).bound <= zeta

    if ok(0):
        return 0
    lo, hi = 0, 1
    while not ok(hi):
        if hi >= max_level:
            raise NoTruncationLevelError(
                f"no truncation level <= {max_level} reaches {zeta:g} on S^{d} at t={t:g}; "
                "use the Varadhan oracle"
            )
        lo, hi = hi, min(2 * hi, max_level)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# =============================
# Kernel specification used by the oracles
# =============================

@dataclass(frozen=True)
class HeatKernelSpec:
    """Truncated heat kernel on a circle (level = wrap count) or sphere (level = degree)."""

    manifold: Manifold
    t: float
    level: int

    def __post_init__(self):
        _check_time(self.t)
        if isinstance(self.manifold, Circle):
            if self.level < 1:
                raise ValueError("circle kernels need at least one wrap")
        elif isinstance(self.manifold, Sphere):
            _check_sphere_dim(self.manifold.d)
            if self.level < 0:
                raise ValueError("truncation level must be >= 0")
        else:
            raise UnsupportedManifoldError(f"no heat-kernel series on {self.manifold}")

    @classmethod
    def for_accuracy(cls, manifold: Manifold, t: float, zeta: float) -> "HeatKernelSpec":
        if isinstance(manifold, Circle):
            return cls(manifold, t, choose_wraps(t, zeta))
        if isinstance(manifold, Sphere):
            return cls(manifold, t, choose_truncation(manifold.d, t, zeta))
        raise UnsupportedManifoldError(f"no heat-kernel series on {manifold}")

    @cached_property
    def _coeffs(self) -> np.ndarray:
        return series_coefficients(self.manifold.d, self.t, self.level)

    @property
    def _alpha(self) -> float:
        return 0.5 * (self.manifold.d - 1)

    def radial_density(self, r) -> np.ndarray:
        """Kernel value at geodesic distance r."""
        r = np.asarray(r, dtype=float)
        if isinstance(self.manifold, Circle):
            return circle_kernel(self.t, r, self.level)
        return gegenbauer_sum(np.clip(np.cos(r), -1.0, 1.0), self._alpha, self._coeffs)

    def radial_log_density(self, r) -> Tuple[np.ndarray, int]:
        r = np.asarray(r, dtype=float)
        if isinstance(self.manifold, Circle):
            return circle_log_kernel(self.t, r, self.level), 0
        return _clamped_log(self.radial_density(r))

    def density(self, x, y) -> np.ndarray:
        if isinstance(self.manifold, Circle):
            return circle_kernel(self.t, self.manifold.log(x, y), self.level)
        return gegenbauer_sum(self._inner(x, y), self._alpha, self._coeffs)

    def log_density(self, x, y) -> Tuple[np.ndarray, int]:
        """(log nu_l(x, y), number of clamp events)."""
        if isinstance(self.manifold, Circle):
            return circle_log_kernel(self.t, self.manifold.log(x, y), self.level), 0
        return _clamped_log(self.density(x, y))

    def log_density_grad(self, x, y) -> np.ndarray:
        """Riemannian gradient in x of log nu_l(x, y)."""
        if isinstance(self.manifold, Circle):
            delta = self.manifold.log(x, y)
            return -circle_log_kernel_derivative(self.t, delta, self.level)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = self._inner(x, y)
        value = gegenbauer_sum(c, self._alpha, self._coeffs)
        if np.any(value <= 0.0):
            raise KernelNonpositiveError(
                f"nu_l is nonpositive at a gradient evaluation (level {self.level}, t={self.t:g})"
            )
        if self.level == 0:
            slope = np.zeros_like(c)
        else:
            slope = gegenbauer_sum(c, self._alpha + 1.0, 2.0 * self._alpha * self._coeffs[1:])
        return (slope / value)[..., None] * (y - c[..., None] * x)

    def _inner(self, x, y) -> np.ndarray:
        c = np.sum(np.asarray(x, dtype=float) * np.asarray(y, dtype=float), axis=-1)
        return np.clip(c, -1.0, 1.0)


def _clamped_log(values: np.ndarray) -> Tuple[np.ndarray, int]:
    bad = values <= CLAMP_FLOOR
    clamps = int(np.count_nonzero(bad))
    if clamps:
        logger.debug("clamped %d nonpositive kernel values", clamps)
    return np.log(np.where(bad, CLAMP_FLOOR, values)), clamps


def kernel_table(d: int, t: float, levels: Iterable[int], cs: Iterable[float]) -> List[dict]:
    """Rows (d, t, l, c, value, tail_bound); d == 1 tabulates the circle with l wraps."""
    rows = []
    cs = np.asarray(list(cs), dtype=float)
    for level in levels:
        if d == 1:
            values = circle_kernel(t, np.arccos(np.clip(cs, -1.0, 1.0)), level)
            tail = circle_tail_bound(t, level)
        else:
            values = sphere_kernel(d, t, cs, level)
            tail = truncation_tail_bound(d, t, level).bound
        for c, value in zip(cs, values):
            rows.append(
                {"d": d, "t": t, "l": level, "c": float(c), "value": float(value), "tail_bound": tail}
            )
    return rows
