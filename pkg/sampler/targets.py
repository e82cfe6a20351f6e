"""Potentials f for the target densities exp(-f) used by the experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .manifolds import SPD, Circle, Manifold, Sphere

BatchFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """Potential f with its gradient; evaluations broadcast over leading batch axes.

    `L1` is the user-supplied Lipschitz constant of f (local for potentials that
    are not globally Lipschitz). `convex` marks geodesically convex potentials.
    """

    manifold: Manifold
    f: BatchFn
    euclidean_grad_f: BatchFn
    L1: float
    description: str = ""
    mode: Optional[np.ndarray] = None
    convex: bool = False
    riemannian_grad_f: Optional[BatchFn] = None

    def __post_init__(self):
        if not self.L1 > 0.0:
            raise ConfigError("target.L1", f"Lipschitz constant must be positive, got {self.L1}")

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.f(x), dtype=float)

    def rgrad(self, x: np.ndarray) -> np.ndarray:
        if self.riemannian_grad_f is not None:
            return np.asarray(self.riemannian_grad_f(x), dtype=float)
        return self.manifold.egrad2rgrad(x, self.euclidean_grad_f(x))


def zero_potential(manifold: Manifold) -> TargetSpec:
    def f(x):
        return np.zeros(manifold.batch_shape(x))

    def grad(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return TargetSpec(manifold, f, grad, L1=1.0, description="zero", convex=True)


def von_mises_fisher(kappa: float, mu) -> TargetSpec:
    """f(x) = -kappa mu^T x on S^d with d + 1 = len(mu)."""
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size < 2:
        raise ConfigError("target.mu", "mean direction needs at least two components")
    norm = float(np.linalg.norm(mu))
    if not kappa > 0.0 or norm == 0.0:
        raise ConfigError("target.kappa", "concentration kappa * |mu| must be positive")
    manifold = Sphere(mu.size - 1)

    def f(x):
        return -kappa * (np.asarray(x, dtype=float) @ mu)

    def grad(x):
        return np.broadcast_to(-kappa * mu, np.shape(x)).copy()

    return TargetSpec(
        manifold, f, grad,
        L1=kappa * norm,
        description=f"vMF(kappa={kappa:g}, |mu|={norm:.6g}) on {manifold}",
        mode=mu / norm,
    )


def circle_cosine(beta: float, theta0: float = 0.0) -> TargetSpec:
    """f(theta) = -beta cos(theta - theta0); the von Mises law on S^1."""
    if not beta > 0.0:
        raise ConfigError("target.beta", f"concentration must be positive, got {beta}")
    manifold = Circle()

    def f(x):
        return -beta * np.cos(np.asarray(x, dtype=float) - theta0)

    def grad(x):
        return beta * np.sin(np.asarray(x, dtype=float) - theta0)

    return TargetSpec(
        manifold, f, grad,
        L1=beta,
        description=f"von Mises(beta={beta:g}) on Circle",
        mode=np.array(np.mod(theta0, 2.0 * math.pi)),
    )


def spd_quartic(m: int, sigma: float, lipschitz_radius: float = 0.5) -> TargetSpec:
    """f(X) = d(X, I)^4 / (2 sigma^2) on SPD(m).

    Not globally Lipschitz; L1 is the gradient bound on the ball of radius
    `lipschitz_radius` around I, which holds almost all of the mass.
    """
    if not sigma > 0.0:
        raise ConfigError("target.sigma", f"sigma must be positive, got {sigma}")
    manifold = SPD(m)
    eye = np.eye(m)
    s2 = sigma * sigma

    def f(x):
        return manifold.dist(x, eye) ** 4 / (2.0 * s2)

    def rgrad(x):
        # grad d^2 = -2 log_X(I), so grad f = -2 d^2 log_X(I) / sigma^2
        log = manifold.log(x, eye)
        d2 = manifold.dist(x, eye) ** 2
        return -2.0 * d2[..., None, None] * log / s2

    def egrad(x):
        x = np.asarray(x, dtype=float)
        xinv = np.linalg.inv(x)
        return xinv @ rgrad(x) @ xinv

    return TargetSpec(
        manifold, f, egrad,
        L1=2.0 * lipschitz_radius**3 / s2,
        description=f"quartic(sigma={sigma:g}) on {manifold}",
        mode=eye,
        convex=True,
        riemannian_grad_f=rgrad,
    )
