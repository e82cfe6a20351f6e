"""
Riemannian Gaussian mu(t, x*, .) with density proportional to exp(-d(x*, x)^2 / (2t)).

Exact samplers:

- Sphere / Circle: tangent Gaussian at the centre, hard rejection past the
  injectivity radius pi, then thinning by the exp-map volume density
  (sin r / r)^{d-1} <= 1.
- SPD(m): tangent Gaussian with inflated variance 1/t' = 1/t - m/12 and
  acceptance exp(-m r^2 / 24) * prod_{i<j} sinh(u_ij) / u_ij with
  u_ij = |lam_i - lam_j| / 2. Since sinh(u)/u <= exp(u^2/6) and
  sum_{i<j} (lam_i - lam_j)^2 <= m r^2 this never exceeds one; it needs t < 12/m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, UnsupportedManifoldError
from .manifolds import SPD, Circle, Manifold, Point, Sphere, _same_kind, eigh_sym, sqrtm_pair, sym
from .quadrature import DEFAULT_NODES, radial_integral
from .rejection import DEFAULT_CAP, RejectionResult, rejection_sample

SPD_ACCEPT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class RGaussian:
    center: Point
    t: float

    def __post_init__(self):
        if not self.t > 0.0:
            raise ValueError(f"Riemannian Gaussian variance must be positive, got {self.t}")

    @property
    def manifold(self) -> Manifold:
        return self.center.kind


def log_density_unnorm(g: RGaussian, x: Point) -> float:
    kind = _same_kind(g.center, x)
    return float(-kind.dist(g.center.coords, x.coords) ** 2 / (2.0 * g.t))


def normalizer(g: RGaussian, nodes: int = DEFAULT_NODES) -> float:
    """int_M exp(-d(x*, x)^2 / (2t)) dV(x) on the circle and on spheres."""
    if not isinstance(g.manifold, (Circle, Sphere)):
        raise UnsupportedManifoldError(f"no Riemannian Gaussian normaliser on {g.manifold}")
    # beyond 40 standard deviations the integrand is below exp(-800)
    upper = min(math.pi, 40.0 * math.sqrt(g.t))
    return radial_integral(g.manifold, lambda r: np.exp(-(r**2) / (2.0 * g.t)), nodes, upper)


def sample(g: RGaussian, rng: np.random.Generator, cap: int = DEFAULT_CAP) -> Point:
    draws = sample_batch(g.manifold, g.center.coords[None], g.t, rng, cap=cap).samples
    return Point(g.manifold, draws[0])


def sample_batch(
    manifold: Manifold,
    centers: np.ndarray,
    t: float,
    rng: np.random.Generator,
    *,
    cap: int = DEFAULT_CAP,
    raise_on_cap: bool = True,
) -> RejectionResult:
    """One exact draw per centre; `centers` has shape (n,) + point_shape."""
    centers = np.asarray(centers, dtype=float)
    n = manifold.batch_shape(centers)[0]
    if isinstance(manifold, SPD):
        propose = _spd_proposer(manifold, centers, t)
    elif isinstance(manifold, (Circle, Sphere)):
        propose = _radial_proposer(manifold, centers, t)
    else:
        raise UnsupportedManifoldError(f"no Riemannian Gaussian sampler on {manifold}")
    return rejection_sample(
        n, manifold.point_shape, propose, rng,
        cap=cap, what=f"Riemannian Gaussian on {manifold}", raise_on_cap=raise_on_cap,
    )


def draw(manifold: Manifold, centers: np.ndarray, t: float, rng: np.random.Generator,
         cap: int = DEFAULT_CAP) -> np.ndarray:
    """Exact draws as a plain array (raises on the cap)."""
    return sample_batch(manifold, centers, t, rng, cap=cap).samples


def _radial_proposer(manifold: Manifold, centers: np.ndarray, t: float):
    if not t > 0.0:
        raise ValueError(f"Riemannian Gaussian variance must be positive, got {t}")

    def propose(idx, rng):
        c = centers[idx]
        v = manifold.random_tangent(c, t, rng)
        r = manifold.norm(c, v)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_v = np.where(r < math.pi, np.log(manifold.volume_ratio(r)), -np.inf)
        return manifold.exp(c, v), log_v

    return propose


def _spd_proposer(manifold: SPD, centers: np.ndarray, t: float):
    m = manifold.m
    if not 0.0 < t < 12.0 / m:
        raise ValueError(f"SPD({m}) Gaussian sampler needs 0 < t < {12.0 / m:g}, got {t}")
    t_prop = 1.0 / (1.0 / t - m / 12.0)
    iu = np.triu_indices(m, 1)
    # proposals live in normal coordinates at each centre: X = C^{1/2} expm(S) C^{1/2}
    roots, _ = sqrtm_pair(centers)

    def propose(idx, rng):
        s = manifold.random_normal_coordinates(idx.shape, t_prop, rng)
        lam, vecs = eigh_sym(s)
        r2 = np.sum(lam**2, axis=-1)
        gaps = 0.5 * np.abs(lam[..., iu[0]] - lam[..., iu[1]])
        log_v = -m * r2 / 24.0 + np.sum(log_sinhc(gaps), axis=-1)
        if np.any(log_v > SPD_ACCEPT_TOL):
            raise NumericalError(f"SPD Gaussian acceptance above one ({np.max(log_v):.3g})")
        expm_s = (vecs * np.exp(lam)[..., None, :]) @ np.swapaxes(vecs, -1, -2)
        root = roots[idx]
        return sym(root @ expm_s @ root), log_v

    return propose


def log_sinhc(u: np.ndarray) -> np.ndarray:
    """log(sinh(u) / u) for u >= 0."""
    u = np.asarray(u, dtype=float)
    small = u < 1e-4
    safe = np.where(small, 1.0, u)
    large = safe + np.log1p(-np.exp(-2.0 * safe)) - np.log(2.0 * safe)
    return np.where(small, u * u / 6.0, large)
