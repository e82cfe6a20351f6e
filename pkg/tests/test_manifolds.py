import math

import numpy as np
import pytest

from sampler.errors import CutLocusError, ManifoldMismatchError, NumericalError
from sampler.manifolds import (
    SPD,
    Circle,
    Point,
    Sphere,
    TangentVector,
    distance,
    exp_map,
    grad_dist_sq,
    log_map,
    logm_sym,
    manifold_from_name,
    riemannian_grad,
    sample_tangent_gaussian,
)

from conftest import MANIFOLDS, random_points


@pytest.mark.parametrize("manifold", MANIFOLDS, ids=str)
def test_exp_log_round_trip(manifold, rng):
    x = random_points(manifold, 200, rng)
    v = manifold.random_tangent(x, 0.3, rng)
    keep = manifold.norm(x, v) < 2.5
    x, v = x[keep], v[keep]
    back = manifold.log(x, manifold.exp(x, v))
    assert np.max(manifold.norm(x, back - v)) < 1e-9


@pytest.mark.parametrize("manifold", MANIFOLDS, ids=str)
def test_dist_is_norm_of_log_and_symmetric(manifold, rng):
    x = random_points(manifold, 100, rng)
    y = random_points(manifold, 100, rng)
    d = manifold.dist(x, y)
    assert np.allclose(d, manifold.norm(x, manifold.log(x, y)), atol=1e-9)
    assert np.allclose(d, manifold.dist(y, x), atol=1e-9)
    assert np.all(d >= 0.0)


@pytest.mark.parametrize("manifold", MANIFOLDS, ids=str)
def test_exp_of_zero_is_identity(manifold, rng):
    x = random_points(manifold, 10, rng)
    assert np.allclose(manifold.exp(x, manifold.zero_tangent(x)), x, atol=1e-12)


def test_spd_distance_is_affine_invariant(rng):
    spd = SPD(3)
    x = random_points(spd, 50, rng)
    y = random_points(spd, 50, rng)
    a = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
    moved = spd.dist(a @ x @ a.T, a @ y @ a.T)
    assert np.allclose(moved, spd.dist(x, y), atol=1e-9)


def test_sphere_distance_is_orthogonally_invariant(rng):
    sphere = Sphere(5)
    x = random_points(sphere, 50, rng)
    y = random_points(sphere, 50, rng)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    assert np.allclose(sphere.dist(x @ q.T, y @ q.T), sphere.dist(x, y), atol=1e-9)


@pytest.mark.parametrize("manifold", MANIFOLDS, ids=str)
def test_triangle_inequality(manifold, rng):
    x, y, z = (random_points(manifold, 200, rng) for _ in range(3))
    assert np.all(manifold.dist(x, z) <= manifold.dist(x, y) + manifold.dist(y, z) + 1e-9)


def test_failed_eigendecomposition_is_a_numerical_error(monkeypatch):
    def broken(a):
        raise np.linalg.LinAlgError("Eigenvalues did not converge")

    monkeypatch.setattr(np.linalg, "eigh", broken)
    with pytest.raises(NumericalError):
        logm_sym(np.eye(3))


def test_spd_distance_from_identity_uses_log_eigenvalues():
    spd = SPD(2)
    x = np.diag([math.e, 1.0 / math.e])
    assert spd.dist(np.eye(2), x) == pytest.approx(math.sqrt(2.0), abs=1e-12)


def _directional(f, manifold, x, v, h=1e-5):
    return (f(manifold.exp(x, h * v)) - f(manifold.exp(x, -h * v))) / (2.0 * h)


@pytest.mark.parametrize("manifold", MANIFOLDS, ids=str)
def test_grad_dist_sq_matches_finite_differences(manifold, rng):
    x = random_points(manifold, 1, rng)[0]
    y = manifold.exp(x, manifold.random_tangent(x, 0.2, rng))
    v = manifold.random_tangent(x, 1.0, rng)
    px, py = Point(manifold, x), Point(manifold, y)
    grad = grad_dist_sq(px, py)
    fd = _directional(lambda z: manifold.dist(z, y) ** 2, manifold, x, v)
    exact = float(manifold.inner(x, grad.vec, v))
    assert abs(fd - exact) <= 1e-5 * max(abs(exact), 1e-3)


@pytest.mark.parametrize("manifold", [Sphere(2), Sphere(5), SPD(3)], ids=str)
def test_riemannian_grad_matches_finite_differences(manifold, rng):
    x = random_points(manifold, 1, rng)[0]
    v = manifold.random_tangent(x, 1.0, rng)
    if isinstance(manifold, SPD):
        a = rng.normal(size=(3, 3))
        a = a + a.T

        def f(z):
            return np.trace(a @ z)
    else:
        a = rng.normal(size=manifold.point_shape)

        def f(z):
            return float(a @ z)

    grad = riemannian_grad(a, Point(manifold, x))
    fd = _directional(f, manifold, x, v)
    exact = float(manifold.inner(x, grad.vec, v))
    assert abs(fd - exact) <= 1e-5 * max(abs(exact), 1e-3)


def test_circle_log_takes_representative_in_half_open_interval():
    circle = Circle()
    assert circle.log(0.0, math.pi) == pytest.approx(math.pi)
    assert circle.log(0.5, 0.5 + math.pi) == pytest.approx(math.pi)
    assert circle.log(6.0, 0.2) == pytest.approx(0.2 + 2.0 * math.pi - 6.0)
    assert circle.dist(0.1, 6.2) == pytest.approx(2.0 * math.pi - 6.1)


def test_sphere_log_at_antipode_raises():
    sphere = Sphere(2)
    north = np.array([0.0, 0.0, 1.0])
    with pytest.raises(CutLocusError):
        sphere.log(north, -north)


def test_sphere_exp_at_pi_reaches_antipode():
    sphere = Sphere(2)
    north = np.array([0.0, 0.0, 1.0])
    y = sphere.exp(north, np.array([math.pi, 0.0, 0.0]))
    assert np.allclose(y, -north, atol=1e-12)


def test_point_validation():
    with pytest.raises(ManifoldMismatchError):
        Point(Sphere(2), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        Point(Sphere(2), np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        Point(SPD(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ValueError):
        Point(Circle(), 7.0)


def test_tangent_validation():
    north = Point(Sphere(2), np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        TangentVector(north, np.array([0.0, 0.0, 1.0]))
    assert TangentVector(north, np.array([0.3, 0.4, 0.0])).norm == pytest.approx(0.5)


def test_mixed_manifolds_are_rejected():
    a = Point(Sphere(2), np.array([0.0, 0.0, 1.0]))
    b = Point(Sphere(3), np.array([0.0, 0.0, 0.0, 1.0]))
    with pytest.raises(ManifoldMismatchError):
        distance(a, b)


def test_wrapped_operations_agree_with_batched_ones(rng):
    sphere = Sphere(2)
    x = Point(sphere, sphere.random_uniform(1, rng)[0])
    v = sample_tangent_gaussian(x, 0.1, rng)
    y = exp_map(x, v)
    assert np.allclose(log_map(x, y).vec, v.vec, atol=1e-10)
    assert distance(x, y) == pytest.approx(v.norm, abs=1e-10)


@pytest.mark.parametrize(
    "manifold, expected",
    [(Circle(), 0.3), (Sphere(2), 2 * 0.3), (Sphere(5), 5 * 0.3), (SPD(3), 6 * 0.3)],
    ids=str,
)
def test_tangent_gaussian_has_isotropic_covariance(manifold, expected, rng):
    n = 20000
    base = np.broadcast_to(manifold.base_point(), (n,) + manifold.point_shape)
    v = manifold.random_tangent(base, 0.3, rng)
    sq = manifold.norm(base, v) ** 2
    se = np.std(sq) / math.sqrt(n)
    assert abs(np.mean(sq) - expected) < 5 * se


def test_spd_tangent_draws_are_normal_coordinates_at_the_base(rng):
    spd = SPD(3)
    x = random_points(spd, 5, rng)
    a = spd.random_tangent(x, 0.2, np.random.default_rng(1))
    s = spd.random_normal_coordinates((5,), 0.2, np.random.default_rng(1))
    root = spd.exp(np.broadcast_to(np.eye(3), x.shape), 0.5 * spd.log(np.broadcast_to(np.eye(3), x.shape), x))
    assert np.allclose(a, root @ s @ root, atol=1e-10)
    assert np.allclose(s, np.swapaxes(s, -1, -2))


def test_uniform_sphere_points_have_zero_mean(rng):
    x = Sphere(2).random_uniform(20000, rng)
    assert np.all(np.abs(np.mean(x, axis=0)) < 5 * math.sqrt(1.0 / 3.0 / 20000))


def test_low_discrepancy_points_lie_on_the_manifold():
    for manifold in (Sphere(2), Sphere(4)):
        pts = manifold.low_discrepancy_points(1000)
        assert pts.shape == (1000,) + manifold.point_shape
        assert np.allclose(np.linalg.norm(pts, axis=-1), 1.0)
    circle = Circle().low_discrepancy_points(8)
    assert np.all((circle >= 0.0) & (circle < 2.0 * math.pi))


def test_intrinsic_dimensions():
    assert Circle().dim == 1
    assert Sphere(5).dim == 5
    assert SPD(3).dim == 6
    assert not SPD(3).compact


def test_manifold_from_name():
    assert manifold_from_name("sphere", 2) == Sphere(2)
    assert manifold_from_name("SPD", 3) == SPD(3)
    with pytest.raises(ValueError):
        manifold_from_name("torus", 2)
