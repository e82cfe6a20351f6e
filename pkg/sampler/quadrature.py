"""Gauss-Legendre rules for radial integrals on spheres and the circle."""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NumericalError, UnsupportedManifoldError
from .heat_kernel import sphere_area
from .manifolds import Circle, Manifold, Sphere

DEFAULT_NODES = 512


@lru_cache(maxsize=32)
def _reference_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point rule on [a, b]."""
    if n < 1:
        raise ValueError("quadrature needs at least one node")
    x, w = _reference_rule(int(n))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def radial_dimension(manifold: Manifold) -> int:
    if isinstance(manifold, Circle):
        return 1
    if isinstance(manifold, Sphere):
        return manifold.d
    raise UnsupportedManifoldError(f"{manifold} has no radial quadrature")


def radial_rule(manifold: Manifold, nodes: int = DEFAULT_NODES, upper: float = math.pi):
    """(r, w) such that sum w * h(r) = int_M h(d(x, .)) dV for radial h.

    The weight carries A_{S^{d-1}} sin(r)^{d-1}; on the circle A_{S^0} = 2.
    """
    d = radial_dimension(manifold)
    r, w = gauss_legendre(nodes, 0.0, min(upper, math.pi))
    return r, w * sphere_area(d - 1) * np.sin(r) ** (d - 1)


def radial_integral(manifold: Manifold, fn: Callable, nodes: int = DEFAULT_NODES,
                    upper: float = math.pi) -> float:
    r, w = radial_rule(manifold, nodes, upper)
    values = np.asarray(fn(r), dtype=float)
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite integrand in radial quadrature")
    return float(np.sum(w * values))


def radial_log_moments(manifold: Manifold, radial_log_density: Callable, fn: Callable,
                       nodes: int = DEFAULT_NODES, upper: float = math.pi) -> float:
    """E[fn(r)] under the radial density exp(radial_log_density(r)) (unnormalised)."""
    r, w = radial_rule(manifold, nodes, upper)
    logp = np.asarray(radial_log_density(r), dtype=float)
    if np.any(np.isnan(logp)) or np.any(logp == np.inf):
        raise NumericalError("non-finite log density in radial quadrature")
    p = w * np.exp(logp - np.max(logp))
    values = np.asarray(fn(r), dtype=float)
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite integrand in radial quadrature")
    return float(np.sum(p * values) / np.sum(p))
