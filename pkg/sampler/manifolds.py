"""
Geometry kernel for the three supported manifolds.

Points live in their ambient representation and every method broadcasts over
leading batch axes:

- ``Circle()``  : angles in [0, 2*pi), shape ``(...,)``
- ``Sphere(d)`` : unit vectors in R^{d+1}, shape ``(..., d+1)``
- ``SPD(m)``    : symmetric positive definite matrices, shape ``(..., m, m)``
  with the affine-invariant metric g_X(U, V) = tr(X^-1 U X^-1 V)

`Point` and `TangentVector` are validated single-value wrappers used at the
public boundary; the samplers work on raw batched arrays.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import (
    CutLocusError,
    ManifoldMismatchError,
    NumericalError,
    UnsupportedManifoldError,
)

ANTIPODAL_TOL = 1e-10
SPHERE_NORM_TOL = 1e-12
SYMMETRY_TOL = 1e-12
EIG_FLOOR = 1e-14
EIG_CLAMP_RELATIVE = 1e-10
TWO_PI = 2.0 * math.pi
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class Manifold(ABC):
    """Common interface of the supported manifolds."""

    @property
    @abstractmethod
    def point_shape(self) -> Tuple[int, ...]:
        """Trailing shape of a single point (and of a tangent vector)."""

    @property
    @abstractmethod
    def dim(self) -> int:
        """Intrinsic dimension."""

    @property
    def compact(self) -> bool:
        return True

    @abstractmethod
    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def log(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def dist(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def inner(self, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def egrad2rgrad(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Metric gradient from an ambient (Euclidean) gradient."""

    @abstractmethod
    def random_tangent(self, x: np.ndarray, t: float, rng: np.random.Generator) -> np.ndarray:
        """Isotropic tangent Gaussian with covariance t * Id in the metric at x."""

    @abstractmethod
    def check_point(self, x: np.ndarray) -> None:
        ...

    @abstractmethod
    def check_tangent(self, x: np.ndarray, v: np.ndarray) -> None:
        ...

    @abstractmethod
    def base_point(self) -> np.ndarray:
        """Canonical reference point (north pole, angle 0, identity)."""

    def norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def zero_tangent(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))

    def batch_shape(self, x: np.ndarray) -> Tuple[int, ...]:
        x = np.asarray(x)
        k = len(self.point_shape)
        if x.shape[x.ndim - k:] != self.point_shape:
            raise ManifoldMismatchError(
                f"{self}: expected trailing shape {self.point_shape}, got {x.shape}"
            )
        return x.shape[: x.ndim - k]

    def random_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise UnsupportedManifoldError(f"{self} has no uniform distribution")

    def low_discrepancy_points(self, n: int) -> np.ndarray:
        raise UnsupportedManifoldError(f"{self} has no finite low-discrepancy grid")

    def volume_ratio(self, r: np.ndarray) -> np.ndarray:
        """Exp-map volume density along a geodesic of length r (radial manifolds)."""
        raise UnsupportedManifoldError(f"{self} has no radial volume density")


@dataclass(frozen=True)
class Circle(Manifold):
    """S^1 as angles; the Sphere(1) specialization with arithmetic mod 2*pi."""

    def __str__(self) -> str:
        return "Circle"

    @property
    def point_shape(self) -> Tuple[int, ...]:
        return ()

    @property
    def dim(self) -> int:
        return 1

    def exp(self, x, v):
        return np.mod(np.asarray(x, dtype=float) + v, TWO_PI)

    def log(self, x, y):
        # representative in (-pi, pi]
        delta = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return math.pi - np.mod(math.pi - delta, TWO_PI)

    def dist(self, x, y):
        return np.abs(self.log(x, y))

    def inner(self, x, u, v):
        return np.asarray(u, dtype=float) * np.asarray(v, dtype=float)

    def egrad2rgrad(self, x, g):
        return np.asarray(g, dtype=float)

    def random_tangent(self, x, t, rng):
        _check_variance(t)
        return rng.normal(scale=math.sqrt(t), size=np.shape(x))

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x >= TWO_PI):
            raise ValueError("circle points must be angles in [0, 2*pi)")

    def check_tangent(self, x, v):
        if not np.all(np.isfinite(v)):
            raise ValueError("tangent vector must be finite")

    def base_point(self):
        return np.array(0.0)

    def random_uniform(self, n, rng):
        return rng.uniform(0.0, TWO_PI, size=n)

    def low_discrepancy_points(self, n):
        return TWO_PI * (np.arange(n) + 0.5) / n

    def volume_ratio(self, r):
        return np.ones_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere S^d embedded in R^{d+1}."""

    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"sphere dimension must be >= 1, got {self.d}")

    def __str__(self) -> str:
        return f"Sphere({self.d})"

    @property
    def point_shape(self):
        return (self.d + 1,)

    @property
    def dim(self):
        return self.d

    def exp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        # np.sinc(r / pi) == sin(r) / r, finite at r = 0
        y = np.cos(nv) * x + np.sinc(nv / math.pi) * v
        return y / np.linalg.norm(y, axis=-1, keepdims=True)

    def log(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = np.sum(x * y, axis=-1, keepdims=True)
        if np.any(c <= -1.0 + ANTIPODAL_TOL):
            raise CutLocusError(f"{self}: logarithm requested at an antipodal pair")
        u = y - c * x
        nu = np.linalg.norm(u, axis=-1, keepdims=True)
        theta = np.arctan2(nu, c)
        scale = np.divide(theta, nu, out=np.ones_like(nu), where=nu > 0)
        return scale * u

    def dist(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = np.sum(x * y, axis=-1, keepdims=True)
        s = np.linalg.norm(y - c * x, axis=-1)
        return np.arctan2(s, c[..., 0])

    def inner(self, x, u, v):
        return np.sum(np.asarray(u, dtype=float) * np.asarray(v, dtype=float), axis=-1)

    def project(self, x, g):
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        return g - np.sum(g * x, axis=-1, keepdims=True) * x

    def egrad2rgrad(self, x, g):
        return self.project(x, g)

    def random_tangent(self, x, t, rng):
        _check_variance(t)
        z = rng.normal(scale=math.sqrt(t), size=np.shape(x))
        return self.project(x, z)

    def check_point(self, x):
        self.batch_shape(x)
        norms = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        if not np.all(np.abs(norms - 1.0) <= SPHERE_NORM_TOL):
            raise ValueError(f"{self}: points must have unit norm")

    def check_tangent(self, x, v):
        self.batch_shape(v)
        v = np.asarray(v, dtype=float)
        defect = np.abs(np.sum(np.asarray(x, dtype=float) * v, axis=-1))
        if not np.all(defect <= 1e-10 * np.maximum(np.linalg.norm(v, axis=-1), 1.0)):
            raise ValueError(f"{self}: vector is not tangent at the base point")

    def base_point(self):
        e = np.zeros(self.d + 1)
        e[0] = 1.0
        return e

    def random_uniform(self, n, rng):
        z = rng.normal(size=(n, self.d + 1))
        return z / np.linalg.norm(z, axis=-1, keepdims=True)

    def low_discrepancy_points(self, n):
        if self.d == 2:
            i = np.arange(n) + 0.5
            z = 1.0 - 2.0 * i / n
            rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
            phi = GOLDEN_ANGLE * i
            return np.stack([z, rho * np.cos(phi), rho * np.sin(phi)], axis=-1)
        sobol = qmc.Sobol(d=self.d + 1, scramble=True, seed=0)
        u = sobol.random_base2(int(math.ceil(math.log2(max(n, 2)))))[:n]
        z = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
        return z / np.linalg.norm(z, axis=-1, keepdims=True)

    def volume_ratio(self, r):
        return np.sinc(np.asarray(r, dtype=float) / math.pi) ** (self.d - 1)


@dataclass(frozen=True)
class SPD(Manifold):
    """Symmetric positive definite m x m matrices, affine-invariant metric."""

    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"SPD matrix side must be >= 2, got {self.m}")

    def __str__(self) -> str:
        return f"SPD({self.m})"

    @property
    def point_shape(self):
        return (self.m, self.m)

    @property
    def dim(self):
        return self.m * (self.m + 1) // 2

    @property
    def compact(self):
        return False

    def exp(self, x, v):
        s, si = sqrtm_pair(x)
        inner = sym(si @ np.asarray(v, dtype=float) @ si)
        return sym(s @ expm_sym(inner) @ s)

    def log(self, x, y):
        s, si = sqrtm_pair(x)
        inner = sym(si @ np.asarray(y, dtype=float) @ si)
        return sym(s @ logm_sym(inner) @ s)

    def dist(self, x, y):
        _, si = sqrtm_pair(x)
        w = np.linalg.eigvalsh(sym(si @ np.asarray(y, dtype=float) @ si))
        w = _clamp_eigenvalues(w)
        return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))

    def inner(self, x, u, v):
        # g_X(U, V) = tr(X^-1 U X^-1 V)
        x = np.asarray(x, dtype=float)
        a = np.linalg.solve(x, np.asarray(u, dtype=float))
        b = np.linalg.solve(x, np.asarray(v, dtype=float))
        return np.einsum("...ij,...ji->...", a, b)

    def egrad2rgrad(self, x, g):
        x = np.asarray(x, dtype=float)
        return sym(x @ sym(np.asarray(g, dtype=float)) @ x)

    def random_tangent(self, x, t, rng):
        x = np.asarray(x, dtype=float)
        normal = self.random_normal_coordinates(x.shape[:-2], t, rng)
        root, _ = sqrtm_pair(x)
        return sym(root @ normal @ root)

    def random_normal_coordinates(self, batch_shape, t, rng):
        """Symmetric matrices S with an isotropic Gaussian law of covariance t * Id under tr(S^2)."""
        # g(V, V) = tr(S^2) = sum S_ii^2 + 2 sum_{i<j} S_ij^2, so off-diagonal
        # entries get variance t/2
        _check_variance(t)
        shape = tuple(batch_shape) + (self.m, self.m)
        s = rng.normal(scale=math.sqrt(t / 2.0), size=shape)
        iu = np.triu_indices(self.m, 1)
        upper = np.zeros(shape)
        upper[..., iu[0], iu[1]] = s[..., iu[0], iu[1]]
        diag = rng.normal(scale=math.sqrt(t), size=shape[:-1])
        normal = upper + np.swapaxes(upper, -1, -2)
        normal[..., np.arange(self.m), np.arange(self.m)] = diag
        return normal

    def check_point(self, x):
        self.batch_shape(x)
        x = np.asarray(x, dtype=float)
        if np.max(np.abs(x - np.swapaxes(x, -1, -2)), initial=0.0) > SYMMETRY_TOL:
            raise ValueError(f"{self}: matrix is not symmetric")
        if np.any(np.linalg.eigvalsh(x) <= 0.0):
            raise ValueError(f"{self}: matrix is not positive definite")

    def check_tangent(self, x, v):
        self.batch_shape(v)
        v = np.asarray(v, dtype=float)
        if np.max(np.abs(v - np.swapaxes(v, -1, -2)), initial=0.0) > SYMMETRY_TOL:
            raise ValueError(f"{self}: tangent vectors must be symmetric")

    def base_point(self):
        return np.eye(self.m)


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def eigh_sym(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(sym(a))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc


def _eig_apply(a: np.ndarray, fn) -> np.ndarray:
    w, vecs = eigh_sym(a)
    return (vecs * fn(w)[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def _clamp_eigenvalues(w: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(w), axis=-1, keepdims=True)
    if np.any(w < -EIG_CLAMP_RELATIVE * scale):
        raise NumericalError("matrix is not positive definite beyond clamping tolerance")
    return np.maximum(w, EIG_FLOOR)


def expm_sym(a: np.ndarray) -> np.ndarray:
    return _eig_apply(a, np.exp)


def logm_sym(a: np.ndarray) -> np.ndarray:
    return _eig_apply(a, lambda w: np.log(_clamp_eigenvalues(w)))


def sqrtm_pair(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(X^{1/2}, X^{-1/2}) from one eigendecomposition."""
    w, vecs = eigh_sym(np.asarray(x, dtype=float))
    w = _clamp_eigenvalues(w)
    vt = np.swapaxes(vecs, -1, -2)
    root = (vecs * np.sqrt(w)[..., None, :]) @ vt
    inv_root = (vecs * (1.0 / np.sqrt(w))[..., None, :]) @ vt
    return root, inv_root


def _check_variance(t: float) -> None:
    if not t > 0.0:
        raise ValueError(f"tangent Gaussian variance must be positive, got {t}")


def manifold_from_name(kind: str, dim: int = 0) -> Manifold:
    kind = kind.lower()
    if kind == "circle":
        return Circle()
    if kind == "sphere":
        return Sphere(int(dim))
    if kind == "spd":
        return SPD(int(dim))
    raise ValueError(f"unknown manifold kind {kind!r}")


# =============================
# Validated single-value wrappers
# =============================

@dataclass(frozen=True, eq=False)
class Point:
    kind: Manifold
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.shape != self.kind.point_shape:
            raise ManifoldMismatchError(
                f"{self.kind}: expected shape {self.kind.point_shape}, got {coords.shape}"
            )
        self.kind.check_point(coords)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: Point
    vec: np.ndarray

    def __post_init__(self):
        vec = np.array(self.vec, dtype=float)
        if vec.shape != self.base.kind.point_shape:
            raise ManifoldMismatchError(
                f"{self.base.kind}: expected shape {self.base.kind.point_shape}, got {vec.shape}"
            )
        self.base.kind.check_tangent(self.base.coords, vec)
        vec.setflags(write=False)
        object.__setattr__(self, "vec", vec)

    @property
    def norm(self) -> float:
        return float(self.base.kind.norm(self.base.coords, self.vec))


def _same_kind(a: Point, b: Point) -> Manifold:
    if a.kind != b.kind:
        raise ManifoldMismatchError(f"manifold mismatch: {a.kind} vs {b.kind}")
    return a.kind


def exp_map(x: Point, v: TangentVector) -> Point:
    kind = _same_kind(x, v.base)
    return Point(kind, kind.exp(x.coords, v.vec))


def log_map(x: Point, y: Point) -> TangentVector:
    kind = _same_kind(x, y)
    return TangentVector(x, kind.log(x.coords, y.coords))


def distance(x: Point, y: Point) -> float:
    kind = _same_kind(x, y)
    return float(kind.dist(x.coords, y.coords))


def grad_dist_sq(x: Point, y: Point) -> TangentVector:
    """Riemannian gradient of d(., y)^2 at x, i.e. -2 log_x(y)."""
    kind = _same_kind(x, y)
    return TangentVector(x, -2.0 * kind.log(x.coords, y.coords))


def riemannian_grad(euclidean_grad: np.ndarray, x: Point) -> TangentVector:
    g = np.asarray(euclidean_grad, dtype=float)
    if g.shape != x.kind.point_shape:
        raise ManifoldMismatchError(
            f"{x.kind}: gradient shape {g.shape} does not match {x.kind.point_shape}"
        )
    return TangentVector(x, x.kind.egrad2rgrad(x.coords, g))


def sample_tangent_gaussian(x: Point, t: float, rng: np.random.Generator) -> TangentVector:
    return TangentVector(x, x.kind.random_tangent(x.coords, t, rng))
