"""
Mode finding for the heat-kernel conditional.

Minimises g(x) = f(x) - log nu_l(eta, x, y) (truncated kernel) or
g(x) = f(x) + d(x, y)^2 / (2 eta) (Varadhan surrogate) by Riemannian gradient
descent with Armijo backtracking, one problem per chain, starting at y.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import DivergenceError
from .heat_kernel import HeatKernelSpec
from .targets import TargetSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModeOptions:
    tol: float = 1e-8
    max_iters: int = 200
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 50


@dataclass
class ModeResult:
    x: np.ndarray
    grad_norm: np.ndarray
    iters: int
    converged: np.ndarray


def rhk_objective(
    target: TargetSpec, ys: np.ndarray, eta: float, kernel: Optional[HeatKernelSpec] = None
) -> Tuple[Callable, Callable]:
    """(g, grad g) for a batch of anchors ys; both take points shaped like ys."""
    manifold = target.manifold

    if kernel is None:
        def g(x):
            return target.value(x) + manifold.dist(x, ys) ** 2 / (2.0 * eta)

        def grad(x):
            return target.rgrad(x) - manifold.log(x, ys) / eta
    else:
        def g(x):
            log_nu, _ = kernel.log_density(x, ys)
            return target.value(x) - log_nu

        def grad(x):
            return target.rgrad(x) - kernel.log_density_grad(x, ys)

    return g, grad


def riemannian_descent(manifold, g, grad, x0: np.ndarray, step0: float,
                       opts: ModeOptions = ModeOptions()) -> ModeResult:
    x = np.array(x0, dtype=float)
    batch = manifold.batch_shape(x)
    grad_norm = np.full(batch, np.inf)
    it = 0
    for it in range(opts.max_iters + 1):
        gx = g(x)
        d = grad(x)
        grad_norm = manifold.norm(x, d)
        if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(grad_norm))):
            raise DivergenceError("non-finite objective during mode finding")
        active = grad_norm > opts.tol
        if not np.any(active) or it == opts.max_iters:
            break
        step = np.where(active, step0, 0.0)
        pending = active.copy()
        for _ in range(opts.max_backtracks):
            cand = manifold.exp(x, -_expand(step, d) * d)
            ok = g(cand) <= gx - opts.armijo_c * step * grad_norm**2
            accept = pending & ok
            x = np.where(_expand(accept, x), cand, x)
            pending &= ~ok
            if not np.any(pending):
                break
            step = np.where(pending, step * opts.shrink, step)
    converged = grad_norm <= opts.tol
    if not np.all(converged):
        logger.debug("mode finding stopped after %d iterations, max |grad| %.3g",
                     it, float(np.max(grad_norm)))
    return ModeResult(x=x, grad_norm=grad_norm, iters=it, converged=converged)


def rhk_find_mode(
    target: TargetSpec,
    ys: np.ndarray,
    eta: float,
    kernel: Optional[HeatKernelSpec] = None,
    opts: ModeOptions = ModeOptions(),
) -> ModeResult:
    """Minimiser x* of g for every anchor in ys, initialised at ys."""
    g, grad = rhk_objective(target, ys, eta, kernel)
    step0 = 1.0 / (1.0 / eta + target.L1)
    return riemannian_descent(target.manifold, g, grad, ys, step0, opts)


def _expand(a: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Append trailing axes to a batch array so it broadcasts against `like`."""
    a = np.asarray(a)
    return a.reshape(a.shape + (1,) * (np.ndim(like) - a.ndim))
