"""
Convergence diagnostics and reference samplers.

Frechet variance, histogram KL / TV on the circle, quadrature truths for radial
laws and the exact vMF sampler used as unbiased reference.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.stats import kstest

from .errors import ManifoldMismatchError, NumericalError
from .heat_kernel import HeatKernelSpec, circle_log_kernel, sphere_area
from .manifolds import TWO_PI, Circle, Manifold, Point, Sphere
from .quadrature import DEFAULT_NODES, radial_dimension, radial_log_moments
from .rejection import DEFAULT_CAP, rejection_sample
from .targets import TargetSpec

logger = logging.getLogger(__name__)

MASS_TOL = 1e-12
_GRID_CHUNK = 512


# =============================
# Grid densities on the circle
# =============================

@dataclass(frozen=True, eq=False)
class GridDensity:
    bins: int
    edges: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        mass = np.asarray(self.mass, dtype=float)
        if edges.shape != (self.bins + 1,) or mass.shape != (self.bins,):
            raise ValueError(f"grid with {self.bins} bins needs {self.bins + 1} edges and {self.bins} masses")
        if np.any(mass < 0.0):
            raise ValueError("bin masses must be nonnegative")
        if abs(float(np.sum(mass)) - 1.0) > MASS_TOL:
            raise ValueError(f"bin masses sum to {np.sum(mass):.15g}, not 1")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_mass(cls, mass) -> "GridDensity":
        """Uniform partition of [0, 2 pi); mass is renormalised."""
        mass = np.asarray(mass, dtype=float)
        total = float(np.sum(mass))
        if not total > 0.0:
            raise ValueError("grid density needs positive total mass")
        return cls(mass.size, uniform_edges(mass.size), mass / total)

    def same_grid(self, other: "GridDensity") -> bool:
        return self.bins == other.bins and np.allclose(self.edges, other.edges, rtol=0.0, atol=1e-12)


def uniform_edges(bins: int) -> np.ndarray:
    if bins < 1:
        raise ValueError("need at least one bin")
    return np.linspace(0.0, TWO_PI, bins + 1)


def circle_histogram(angles, bins: int = 64) -> GridDensity:
    angles = np.mod(np.asarray(angles, dtype=float).ravel(), TWO_PI)
    if angles.size == 0:
        raise ValueError("histogram of an empty sample")
    counts, edges = np.histogram(angles, bins=uniform_edges(bins))
    return GridDensity(bins, edges, counts / angles.size)


def target_grid_density(target_unnorm: Callable, bins: int = 64, nodes_per_bin: int = 33) -> GridDensity:
    """Per-bin mass of an unnormalised density on [0, 2 pi) by the trapezoid rule."""
    edges = uniform_edges(bins)
    s = np.linspace(0.0, 1.0, nodes_per_bin)
    theta = edges[:-1, None] + s[None, :] * (edges[1:] - edges[:-1])[:, None]
    values = np.asarray(target_unnorm(theta), dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values < 0.0):
        raise NumericalError("target density must be finite and nonnegative on the grid")
    mass = trapezoid(values, theta, axis=1)
    return GridDensity.from_mass(mass)


def kl_grid(p: GridDensity, q: Union[GridDensity, Callable]) -> float:
    """KL(p || q) with 0 log 0 = 0; math.inf when q misses mass that p has."""
    if not isinstance(q, GridDensity):
        q = target_grid_density(q, p.bins)
    if not p.same_grid(q):
        raise ValueError("KL between densities on different grids")
    support = p.mass > 0.0
    if np.any(q.mass[support] <= 0.0):
        return math.inf
    pm, qm = p.mass[support], q.mass[support]
    return max(float(np.sum(pm * (np.log(pm) - np.log(qm)))), 0.0)


def tv_grid(p: GridDensity, q: GridDensity) -> float:
    if not p.same_grid(q):
        raise ValueError("total variation between densities on different grids")
    return min(0.5 * float(np.sum(np.abs(p.mass - q.mass))), 1.0)


def tv_noise_floor(q: GridDensity, n_a: int, n_b: int) -> float:
    """Expected TV between two independent histograms of sizes n_a and n_b drawn from q.

    Normal approximation per bin: E|X| = sqrt(2 var / pi). Two samplers whose
    laws agree exactly still show this much TV on the grid.
    """
    if n_a < 1 or n_b < 1:
        raise ValueError("histogram sizes must be positive")
    var = q.mass * (1.0 - q.mass) * (1.0 / n_a + 1.0 / n_b)
    return 0.5 * math.sqrt(2.0 / math.pi) * float(np.sum(np.sqrt(var)))


# =============================
# Frechet variance
# =============================

def frechet_variance(samples: Union[Sequence[Point], np.ndarray], x_ref: Point) -> float:
    """(1/n) sum d(x_i, x_ref)^2 over a sequence of Points or a batch array on x_ref's manifold."""
    return float(np.mean(_squared_distances(samples, x_ref)))


def frechet_stats(samples: Union[Sequence[Point], np.ndarray], x_ref: Point) -> Tuple[float, float]:
    """(mean, standard error) of d(x_i, x_ref)^2."""
    d2 = _squared_distances(samples, x_ref)
    stderr = float(np.std(d2, ddof=1) / math.sqrt(d2.size)) if d2.size > 1 else math.nan
    return float(np.mean(d2)), stderr


def _squared_distances(samples, x_ref: Point) -> np.ndarray:
    manifold = x_ref.kind
    if isinstance(samples, np.ndarray):
        batch = samples
        if batch.shape[1:] != manifold.point_shape:
            raise ManifoldMismatchError(
                f"{manifold}: samples of shape {batch.shape[1:]}, expected {manifold.point_shape}"
            )
    else:
        samples = list(samples)
        for s in samples:
            if s.kind != manifold:
                raise ManifoldMismatchError(f"manifold mismatch: {s.kind} vs {manifold}")
        batch = np.array([s.coords for s in samples]).reshape((len(samples),) + manifold.point_shape)
    if batch.shape[0] == 0:
        raise ValueError("Frechet variance of an empty sample")
    return manifold.dist(batch, x_ref.coords) ** 2


# =============================
# Quadrature truths
# =============================

def radial_expectation(manifold: Manifold, radial_log_density: Callable, fn: Callable,
                       nodes: int = DEFAULT_NODES) -> float:
    return radial_log_moments(manifold, radial_log_density, fn, nodes)


def expected_distsq_quadrature(manifold: Manifold, radial_log_density: Callable,
                               nodes: int = DEFAULT_NODES) -> float:
    """E[d(X, x*)^2] for a law whose density depends only on r = d(x*, .)."""
    return radial_expectation(manifold, radial_log_density, lambda r: r**2, nodes)


def vmf_radial_log_density(kappa_eff: float) -> Callable:
    return lambda r: kappa_eff * np.cos(r)


def radial_cdf(manifold: Manifold, radial_log_density: Callable, points: int = 8193) -> Callable:
    """CDF of r = d(x*, X) on [0, pi] by cumulative trapezoid on a fine grid."""
    d = radial_dimension(manifold)
    r = np.linspace(0.0, math.pi, points)
    logp = np.asarray(radial_log_density(r), dtype=float)
    dens = sphere_area(d - 1) * np.sin(r) ** (d - 1) * np.exp(logp - np.max(logp))
    cum = cumulative_trapezoid(dens, r, initial=0.0)
    if not cum[-1] > 0.0:
        raise NumericalError("radial density integrates to zero")
    cum /= cum[-1]
    return lambda s: np.interp(s, r, cum)


def ks_distance(samples, cdf: Callable) -> float:
    return float(kstest(np.asarray(samples, dtype=float).ravel(), cdf).statistic)


# =============================
# Exact vMF sampler
# =============================

def vmf_oracle_sample(d: int, mu_direction, kappa_eff: float, rng: np.random.Generator) -> Point:
    return Point(Sphere(d), vmf_oracle_batch(d, mu_direction, kappa_eff, 1, rng)[0])


def vmf_oracle_batch(d: int, mu_direction, kappa_eff: float, n: int, rng: np.random.Generator,
                     cap: int = DEFAULT_CAP) -> np.ndarray:
    """n exact draws from the vMF law on S^d with density prop. to exp(kappa_eff <mu, x>).

    The cosine w = <mu, x> comes from the Beta-envelope rejection step of
    Wood (1994); its acceptance stays bounded below for every kappa_eff.
    """
    mu = np.asarray(mu_direction, dtype=float)
    if mu.shape != (d + 1,):
        raise ManifoldMismatchError(f"mean direction for S^{d} needs {d + 1} components")
    mu = mu / np.linalg.norm(mu)
    if not kappa_eff > 0.0:
        raise ValueError(f"concentration must be positive, got {kappa_eff}")

    b = d / (math.sqrt(4.0 * kappa_eff**2 + d * d) + 2.0 * kappa_eff)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa_eff * x0 + d * math.log1p(-x0 * x0)

    def propose(idx, rng):
        z = rng.beta(0.5 * d, 0.5 * d, size=idx.size)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        return w, kappa_eff * w + d * np.log1p(-x0 * w) - c

    res = rejection_sample(n, (), propose, rng, cap=cap, what="vMF cosine sampler")
    w = res.samples

    v = rng.standard_normal((n, d + 1))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = w[:, None] * mu + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# =============================
# Brute-force circle conditionals
# =============================

class GridConditionalSampler:
    """Inverse-CDF sampling of both proximal conditionals on a fine circle grid."""

    def __init__(self, target: TargetSpec, eta: float, kernel: HeatKernelSpec, grid: int = 4096):
        if not isinstance(target.manifold, Circle) or not isinstance(kernel.manifold, Circle):
            raise ManifoldMismatchError("grid conditionals are implemented on the circle only")
        if grid < 2:
            raise ValueError("grid needs at least two points")
        self.target = target
        self.eta = eta
        self.wraps = kernel.level
        self.h = TWO_PI / grid
        self.theta = (np.arange(grid) + 0.5) * self.h
        self._neg_f = -target.value(self.theta)

    def sample_y(self, xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self._sample(xs, rng, with_target=False)

    def sample_x(self, ys: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self._sample(ys, rng, with_target=True)

    def step(self, xs: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        ys = self.sample_y(xs, rng)
        return ys, self.sample_x(ys, rng)

    def _sample(self, anchors: np.ndarray, rng, with_target: bool) -> np.ndarray:
        anchors = np.asarray(anchors, dtype=float)
        out = np.empty(anchors.shape[0])
        for lo in range(0, anchors.shape[0], _GRID_CHUNK):
            a = anchors[lo:lo + _GRID_CHUNK]
            delta = Circle().log(a[:, None], self.theta[None, :])
            logw = circle_log_kernel(self.eta, delta, self.wraps)
            if with_target:
                logw = logw + self._neg_f[None, :]
            w = np.exp(logw - np.max(logw, axis=1, keepdims=True))
            cdf = np.cumsum(w, axis=1)
            u = rng.uniform(size=a.shape[0]) * cdf[:, -1]
            j = np.minimum(np.sum(cdf < u[:, None], axis=1), self.theta.size - 1)
            jitter = rng.uniform(-0.5, 0.5, size=a.shape[0]) * self.h
            out[lo:lo + _GRID_CHUNK] = np.mod(self.theta[j] + jitter, TWO_PI)
        return out


def grid_reference_chain(inits, n_iters: int, sampler: GridConditionalSampler,
                         rng: np.random.Generator) -> np.ndarray:
    """States (n_iters + 1, n) of the proximal chain run with grid conditionals."""
    x = np.mod(np.asarray(inits, dtype=float), TWO_PI)
    states = np.empty((n_iters + 1,) + x.shape)
    states[0] = x
    for it in range(n_iters):
        _, x = sampler.step(x, rng)
        states[it + 1] = x
    return states
