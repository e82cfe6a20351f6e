"""
Fast property audits behind `sampler selftest`.

Each audit returns (name, passed, detail). The Monte-Carlo audits use a few
thousand draws and five-standard-error tolerances.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, List, Tuple

import numpy as np

from .config import default_config, parse_config, serialize_config
from .diagnostics import (
    expected_distsq_quadrature,
    frechet_stats,
    vmf_oracle_batch,
    vmf_radial_log_density,
)
from .errors import EXIT_NUMERICAL, EXIT_OK, SamplerError
from .gaussian import draw
from .heat_kernel import HeatKernelSpec, circle_kernel, circle_kernel_fourier, sphere_kernel, truncation_tail_bound
from .manifolds import SPD, Circle, Point, Sphere
from .quadrature import radial_integral
from .rng import auxiliary_stream

logger = logging.getLogger(__name__)

AuditResult = Tuple[str, bool, str]


def print_section(title: str):
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70 + "\n")


# =============================
# Audits
# =============================

def audit_exp_log(rng) -> AuditResult:
    worst = 0.0
    for manifold in (Circle(), Sphere(2), Sphere(5), SPD(3)):
        if isinstance(manifold, SPD):
            eye = np.broadcast_to(np.eye(3), (64, 3, 3))
            x = manifold.exp(eye, manifold.random_tangent(eye, 0.3, rng))
        else:
            x = manifold.random_uniform(64, rng)
        v = manifold.random_tangent(x, 0.25, rng)
        # stay well inside the injectivity radius
        keep = manifold.norm(x, v) < 2.5
        back = manifold.log(x[keep], manifold.exp(x[keep], v[keep]))
        worst = max(worst, float(np.max(manifold.norm(x[keep], back - v[keep]))))
    return "exp/log round trip", worst < 1e-9, f"max error {worst:.2e}"


def audit_spd_invariance(rng) -> AuditResult:
    spd = SPD(3)
    eye = np.broadcast_to(np.eye(3), (32, 3, 3))
    x = spd.exp(eye, spd.random_tangent(eye, 0.5, rng))
    y = spd.exp(eye, spd.random_tangent(eye, 0.5, rng))
    a = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
    moved = spd.dist(a @ x @ a.T, a @ y @ a.T)
    err = float(np.max(np.abs(moved - spd.dist(x, y))))
    return "SPD affine invariance", err < 1e-9, f"max error {err:.2e}"


def audit_circle_poisson(rng) -> AuditResult:
    phi = np.linspace(0.0, math.pi, 33)
    err = 0.0
    for t in (0.1, 0.5, 2.0):
        err = max(err, float(np.max(np.abs(circle_kernel(t, phi, 10) - circle_kernel_fourier(t, phi, 200)))))
    return "circle kernel: wrapped sum vs Fourier series", err < 1e-10, f"max error {err:.2e}"


def audit_sphere_normalisation(rng) -> AuditResult:
    sphere = Sphere(2)
    err = 0.0
    for t in (0.1, 0.5, 1.0):
        kernel = HeatKernelSpec(sphere, t, 40)
        total = radial_integral(sphere, kernel.radial_density, nodes=1024)
        err = max(err, abs(total - 1.0))
    return "S^2 heat kernel integrates to one", err < 1e-6, f"max error {err:.2e}"


def audit_tail_bound(rng) -> AuditResult:
    cs = np.linspace(-1.0, 1.0, 41)
    ok = True
    worst = 0.0
    for d in (2, 3):
        for t in (0.1, 0.5):
            reference = sphere_kernel(d, t, cs, 400)
            for level in (2, 5, 10):
                gap = float(np.max(np.abs(reference - sphere_kernel(d, t, cs, level))))
                bound = truncation_tail_bound(d, t, level).bound
                ok &= gap <= bound * (1.0 + 1e-9) + 1e-15
                worst = max(worst, gap / bound if bound > 0 else 0.0)
    return "truncation gap within tail bound", ok, f"largest gap/bound {worst:.3f}"


def audit_gaussian_moment(rng) -> AuditResult:
    sphere = Sphere(2)
    t = 0.2
    center = np.array([0.0, 0.0, 1.0])
    xs = draw(sphere, np.broadcast_to(center, (4000, 3)), t, rng)
    mean, stderr = frechet_stats(xs, Point(sphere, center))
    truth = expected_distsq_quadrature(sphere, lambda r: -(r**2) / (2.0 * t))
    z = abs(mean - truth) / stderr
    return "Riemannian Gaussian second moment on S^2", z < 5.0, f"{mean:.5f} vs {truth:.5f} ({z:.1f} se)"


def audit_vmf_oracle(rng) -> AuditResult:
    mu = np.array([10.0, 0.1, 2.0])
    kappa_eff = 10.0 * float(np.linalg.norm(mu))
    direction = mu / np.linalg.norm(mu)
    xs = vmf_oracle_batch(2, direction, kappa_eff, 4000, rng)
    mean, stderr = frechet_stats(xs, Point(Sphere(2), direction))
    truth = expected_distsq_quadrature(Sphere(2), vmf_radial_log_density(kappa_eff))
    z = abs(mean - truth) / stderr
    return "vMF oracle second moment", z < 5.0, f"{mean:.6f} vs {truth:.6f} ({z:.1f} se)"


def audit_config_round_trip(rng) -> AuditResult:
    ok = all(
        parse_config(serialize_config(default_config(name))) == default_config(name)
        for name in ("VmfSphere", "SpdQuartic", "CircleKl", "KernelTable")
    )
    return "config round trip", ok, "parse(serialize(cfg)) == cfg"


AUDITS: List[Callable] = [
    audit_exp_log,
    audit_spd_invariance,
    audit_circle_poisson,
    audit_sphere_normalisation,
    audit_tail_bound,
    audit_gaussian_moment,
    audit_vmf_oracle,
    audit_config_round_trip,
]


def run_selftest(seed: int = 0) -> int:
    print_section("Riemannian proximal sampler: self test")
    failures = 0
    for i, audit in enumerate(AUDITS):
        rng = auxiliary_stream(seed, i)
        try:
            name, passed, detail = audit(rng)
        except SamplerError as exc:
            name, passed, detail = audit.__name__, False, f"raised {type(exc).__name__}: {exc}"
        failures += not passed
        print(f"  [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    print_section(f"{len(AUDITS) - failures} of {len(AUDITS)} audits passed")
    if failures:
        logger.error("%d self-test audits failed", failures)
        return EXIT_NUMERICAL
    return EXIT_OK
