import math

import numpy as np
import pytest

from sampler.errors import (
    CutLocusError,
    KernelNonpositiveError,
    NoTruncationLevelError,
    UnsupportedManifoldError,
)
from sampler.heat_kernel import (
    HeatKernelSpec,
    choose_truncation,
    choose_wraps,
    circle_kernel,
    circle_kernel_fourier,
    circle_tail_bound,
    kernel_table,
    sphere_area,
    sphere_kernel,
    sphere_kernel_grad,
    truncation_tail_bound,
    varadhan_log_kernel,
)
from sampler.manifolds import SPD, Circle, Sphere
from sampler.quadrature import gauss_legendre, radial_integral

NORTH = np.array([0.0, 0.0, 1.0])


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0 * math.pi)
    assert sphere_area(2) == pytest.approx(4.0 * math.pi)
    assert sphere_area(3) == pytest.approx(2.0 * math.pi**2)


@pytest.mark.parametrize("t", [0.1, 0.5, 2.0])
def test_circle_wrapped_sum_matches_fourier_series(t):
    phi = np.linspace(-math.pi, math.pi, 101)
    assert np.max(np.abs(circle_kernel(t, phi, 10) - circle_kernel_fourier(t, phi, 200))) < 1e-10


@pytest.mark.parametrize("t", [0.05, 1.0, 5.0])
def test_circle_kernel_integrates_to_one(t):
    kernel = HeatKernelSpec(Circle(), t, choose_wraps(t, 1e-14))
    assert radial_integral(Circle(), kernel.radial_density, nodes=512) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_sphere_series_integrates_to_one(t):
    kernel = HeatKernelSpec(Sphere(2), t, 40)
    assert radial_integral(Sphere(2), kernel.radial_density, nodes=1024) == pytest.approx(1.0, abs=1e-6)


def test_sphere_kernel_flattens_to_uniform_density():
    c = np.linspace(-1.0, 1.0, 11)
    assert np.allclose(sphere_kernel(2, 50.0, c, 10), 1.0 / (4.0 * math.pi), atol=1e-8)


def test_chapman_kolmogorov_on_s2():
    s, t, level = 0.2, 0.3, 60
    z = np.array([math.sin(1.0), 0.0, math.cos(1.0)])
    u, wu = gauss_legendre(256, -1.0, 1.0)
    phi = 2.0 * math.pi * np.arange(512) / 512
    uu, pp = np.meshgrid(u, phi, indexing="ij")
    rho = np.sqrt(1.0 - uu**2)
    y = np.stack([rho * np.cos(pp), rho * np.sin(pp), uu], axis=-1)
    integrand = sphere_kernel(2, s, y @ NORTH, level) * sphere_kernel(2, t, y @ z, level)
    total = float(np.sum(integrand * wu[:, None]) * 2.0 * math.pi / 512)
    assert total == pytest.approx(float(sphere_kernel(2, s + t, NORTH @ z, level)), abs=1e-5)


@pytest.mark.parametrize("d", [2, 3, 5])
@pytest.mark.parametrize("t", [0.1, 0.5])
def test_truncation_gap_is_within_tail_bound(d, t):
    cs = np.linspace(-1.0, 1.0, 81)
    reference = sphere_kernel(d, t, cs, 400)
    for level in (1, 3, 8, 15):
        gap = np.max(np.abs(reference - sphere_kernel(d, t, cs, level)))
        assert gap <= truncation_tail_bound(d, t, level).bound * (1.0 + 1e-9) + 1e-15


def test_tail_bound_decreases_with_level():
    bounds = [truncation_tail_bound(2, 0.2, level).bound for level in (2, 4, 8, 16)]
    assert all(a > b for a, b in zip(bounds, bounds[1:]))


@pytest.mark.parametrize("t, zeta", [(0.5, 1e-10), (0.1, 1e-8), (0.05, 1e-10)])
def test_choose_truncation_is_smallest_sufficient_level(t, zeta):
    level = choose_truncation(2, t, zeta)
    assert truncation_tail_bound(2, t, level).bound <= zeta
    if level > 0:
        assert truncation_tail_bound(2, t, level - 1).bound > zeta


def test_choose_truncation_gives_up_at_the_level_limit():
    with pytest.raises(NoTruncationLevelError):
        choose_truncation(2, 1e-5, 1e-10, max_level=64)


def test_choose_wraps():
    n = choose_wraps(4.0, 1e-12)
    assert circle_tail_bound(4.0, n) <= 1e-12
    assert n == 1 or circle_tail_bound(4.0, n - 1) > 1e-12


def test_heat_kernel_spec_for_accuracy():
    spec = HeatKernelSpec.for_accuracy(Sphere(2), 0.3, 1e-10)
    assert spec.level == choose_truncation(2, 0.3, 1e-10)
    with pytest.raises(UnsupportedManifoldError):
        HeatKernelSpec.for_accuracy(SPD(3), 0.3, 1e-10)
    with pytest.raises(UnsupportedManifoldError):
        HeatKernelSpec(Sphere(1), 0.3, 5)


def test_density_is_symmetric_and_peaks_at_zero_distance(rng):
    spec = HeatKernelSpec(Sphere(2), 0.3, 40)
    x = Sphere(2).random_uniform(20, rng)
    y = Sphere(2).random_uniform(20, rng)
    assert np.allclose(spec.density(x, y), spec.density(y, x))
    assert np.all(spec.density(x, x) > spec.density(x, y))


def test_sphere_log_density_grad_matches_finite_differences(rng):
    sphere = Sphere(2)
    spec = HeatKernelSpec(sphere, 0.5, 30)
    x = sphere.random_uniform(1, rng)[0]
    y = sphere.exp(x, sphere.random_tangent(x, 0.5, rng))
    v = sphere.random_tangent(x, 1.0, rng)
    h = 1e-5
    fd = (spec.log_density(sphere.exp(x, h * v), y)[0] - spec.log_density(sphere.exp(x, -h * v), y)[0]) / (2 * h)
    exact = float(np.dot(spec.log_density_grad(x, y), v))
    assert fd == pytest.approx(exact, rel=1e-5, abs=1e-8)


def test_circle_log_density_grad_matches_finite_differences():
    spec = HeatKernelSpec(Circle(), 0.4, 5)
    x, y, h = 1.0, 2.5, 1e-6
    fd = (spec.log_density(x + h, y)[0] - spec.log_density(x - h, y)[0]) / (2 * h)
    assert fd == pytest.approx(float(spec.log_density_grad(x, y)), rel=1e-6)


def test_nonpositive_truncated_kernel_is_reported():
    with pytest.raises(KernelNonpositiveError):
        sphere_kernel_grad(2, 0.01, -1.0, 1)
    spec = HeatKernelSpec(Sphere(2), 0.01, 1)
    _, clamps = spec.log_density(NORTH, -NORTH)
    assert clamps == 1


def test_varadhan_kernel():
    sphere = Sphere(2)
    east = np.array([1.0, 0.0, 0.0])
    assert varadhan_log_kernel(sphere, 0.5, NORTH, east) == pytest.approx(-(math.pi / 2) ** 2)
    with pytest.raises(CutLocusError):
        varadhan_log_kernel(sphere, 0.5, NORTH, -NORTH)
    with pytest.raises(ValueError):
        varadhan_log_kernel(sphere, 0.0, NORTH, east)


def test_kernel_table_rows():
    rows = kernel_table(2, 0.5, [5, 10], [-1.0, 0.0, 1.0])
    assert len(rows) == 6
    assert set(rows[0]) == {"d", "t", "l", "c", "value", "tail_bound"}
    assert rows[-1]["value"] == pytest.approx(float(sphere_kernel(2, 0.5, 1.0, 10)))
    circle_rows = kernel_table(1, 0.5, [3], [1.0])
    assert circle_rows[0]["value"] == pytest.approx(float(circle_kernel(0.5, 0.0, 3)))
