import numpy as np
import pytest

from sampler.heat_kernel import HeatKernelSpec
from sampler.manifolds import Circle, Sphere
from sampler.optim import ModeOptions, rhk_find_mode, rhk_objective
from sampler.targets import circle_cosine, spd_quartic, von_mises_fisher


def test_varadhan_mode_solves_the_stationarity_condition(rng):
    target = circle_cosine(2.0)
    ys = rng.uniform(0.0, 2.0 * np.pi, size=50)
    eta = 0.1
    res = rhk_find_mode(target, ys, eta)
    assert np.all(res.converged)
    circle = Circle()
    residual = 2.0 * np.sin(res.x) - circle.log(res.x, ys) / eta
    assert np.max(np.abs(residual)) < 1e-6


def test_truncated_kernel_mode_converges(rng):
    target = circle_cosine(1.0)
    eta = 0.3
    kernel = HeatKernelSpec.for_accuracy(Circle(), eta, 1e-10)
    ys = rng.uniform(0.0, 2.0 * np.pi, size=30)
    res = rhk_find_mode(target, ys, eta, kernel)
    assert np.all(res.converged)
    _, grad = rhk_objective(target, ys, eta, kernel)
    assert np.max(np.abs(grad(res.x))) < 1e-6


def test_large_step_recovers_the_target_mode():
    mu = np.array([10.0, 0.1, 2.0])
    target = von_mises_fisher(10.0, mu)
    start = np.array([[1.0, 1.0, 1.0], [0.0, 1.0, 0.0], [0.3, -0.2, 0.9]])
    start /= np.linalg.norm(start, axis=1, keepdims=True)
    res = rhk_find_mode(target, start, 1e6, opts=ModeOptions(tol=1e-10, max_iters=500))
    assert np.allclose(res.x, mu / np.linalg.norm(mu), atol=1e-6)


def test_objective_is_lowest_at_the_mode(rng):
    target = circle_cosine(2.0)
    ys = np.array([0.5, 2.0, 4.0])
    g, _ = rhk_objective(target, ys, 0.2)
    x = rhk_find_mode(target, ys, 0.2).x
    for shift in (-0.05, 0.05):
        assert np.all(g(x) <= g(x + shift))


def test_zero_iterations_returns_the_start():
    target = circle_cosine(1.0)
    ys = np.array([1.0, 2.0])
    res = rhk_find_mode(target, ys, 0.1, opts=ModeOptions(max_iters=0))
    assert np.array_equal(res.x, ys)
    assert res.iters == 0


def _varadhan_g(target, y, eta, x):
    sphere = target.manifold
    return target.value(x) + sphere.dist(x, np.broadcast_to(y, x.shape)) ** 2 / (2.0 * eta)


def test_vmf_mode_matches_the_grid_argmin():
    target = von_mises_fisher(10.0, [10.0, 0.1, 2.0])
    sphere = Sphere(2)
    eta = 0.01
    y = np.array([1.0, 0.5, 0.5]) / np.linalg.norm([1.0, 0.5, 0.5])
    x_star = rhk_find_mode(target, y[None], eta).x[0]

    # coarse global grid, then a fine tangent-plane grid around its best point
    coarse = sphere.low_discrepancy_points(100_000)
    best = coarse[np.argmin(_varadhan_g(target, y, eta, coarse))]
    basis = np.linalg.qr(np.column_stack([best, np.eye(3)]))[0][:, 1:3]
    a, b = np.meshgrid(np.linspace(-0.03, 0.03, 301), np.linspace(-0.03, 0.03, 301))
    v = np.stack([a.ravel(), b.ravel()], axis=-1) @ basis.T
    fine = sphere.exp(np.broadcast_to(best, v.shape), v)
    best = fine[np.argmin(_varadhan_g(target, y, eta, fine))]
    assert sphere.dist(x_star, best) < 2e-3


def test_spd_mode_at_the_identity_anchor_is_the_identity():
    target = spd_quartic(3, 0.03)
    res = rhk_find_mode(target, np.eye(3)[None], 0.01)
    assert np.all(res.converged)
    assert np.allclose(res.x[0], np.eye(3), atol=1e-12)
