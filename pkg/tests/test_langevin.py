import math

import numpy as np
import pytest

from sampler.errors import ConfigError, DivergenceError
from sampler.langevin import (
    DIVERGENCE_DISTANCE,
    Constant,
    Decreasing,
    LmcConfig,
    rlmc_run,
    rlmc_step,
    safe_distance,
)
from sampler.diagnostics import expected_distsq_quadrature, frechet_stats, vmf_radial_log_density
from sampler.manifolds import SPD, Circle, Point, Sphere
from sampler.proximal import initial_points
from sampler.targets import TargetSpec, spd_quartic, von_mises_fisher, zero_potential


def test_schedule_values():
    cfg = LmcConfig(1e-3, Decreasing(1e-2))
    assert cfg.step_at(1) == 1e-3
    assert cfg.step_at(10) == pytest.approx(1e-3)
    assert cfg.step_at(20) == pytest.approx(5e-4)
    assert LmcConfig(1e-3).step_at(1000) == 1e-3
    assert isinstance(LmcConfig(1e-3).schedule, Constant)


def test_config_validation():
    with pytest.raises(ConfigError) as info:
        LmcConfig(0.0)
    assert info.value.key == "lmc.step"
    with pytest.raises(ConfigError) as info:
        LmcConfig(1e-3, Decreasing(-1.0))
    assert info.value.key == "lmc.schedule_c"


def test_zero_potential_step_is_a_gaussian_increment(stream):
    circle = Circle()
    step = 0.01
    x = np.zeros(20000)
    moved = rlmc_step(x, zero_potential(circle), step, stream)
    inc = circle.log(x, moved)
    assert np.var(inc) == pytest.approx(2.0 * step, rel=0.05)


def test_step_on_a_point(rng):
    x = Point(SPD(2), np.eye(2))
    y = rlmc_step(x, spd_quartic(2, 0.5), 1e-3, rng)
    assert isinstance(y, Point)
    with pytest.raises(ValueError):
        rlmc_step(x, spd_quartic(2, 0.5), 0.0, rng)


def test_non_finite_gradient_raises(rng):
    circle = Circle()
    bad = TargetSpec(circle, lambda x: np.zeros_like(x), lambda x: np.full_like(x, np.nan), L1=1.0)
    with pytest.raises(DivergenceError):
        rlmc_step(np.zeros(3), bad, 0.1, rng)


def test_runs_are_deterministic(rng):
    target = spd_quartic(3, 0.03)
    inits = np.broadcast_to(np.eye(3), (8, 3, 3)).copy()
    cfg = LmcConfig(1e-3, Decreasing(1e-2))
    a = rlmc_run(inits, 20, target, cfg, seed=4)
    b = rlmc_run(inits, 20, target, cfg, seed=4)
    assert np.array_equal(a.states, b.states)
    assert a.states.shape == (21, 8, 3, 3)
    assert np.all(a.rhk_rejections == 0)
    assert a.peak_distance.shape == (8,)


def test_decreasing_schedule_stays_near_the_mode():
    target = spd_quartic(3, 0.03)
    inits = np.broadcast_to(np.eye(3), (50, 3, 3)).copy()
    trace = rlmc_run(inits, 100, target, LmcConfig(1e-3, Decreasing(1e-2)), seed=0)
    assert not np.any(trace.failed)
    assert np.max(trace.peak_distance) < 1.0


def test_large_constant_step_diverges_and_freezes(rng):
    spd = SPD(3)
    target = spd_quartic(3, 0.03)
    inits = initial_points(spd, 20, "radius", rng, radius=3.0)
    trace = rlmc_run(inits, 50, target, LmcConfig(1e-3), seed=0)
    assert np.all(trace.failed)
    assert np.all(trace.peak_distance > 10.0)
    # frozen chains keep their last finite state
    assert np.all(np.isfinite(trace.states))


def test_safe_distance_marks_bad_rows():
    circle = Circle()
    d = safe_distance(circle, np.array([0.5, np.nan, np.inf]), np.array(0.0))
    assert d[0] == pytest.approx(0.5)
    assert np.isinf(d[1]) and np.isinf(d[2])
    assert DIVERGENCE_DISTANCE == 1e3


@pytest.mark.slow
def test_stationary_bias_shrinks_with_the_step():
    target = von_mises_fisher(10.0, [10.0, 0.1, 2.0])
    mode = Point(Sphere(2), target.mode)
    truth = expected_distsq_quadrature(mode.kind, vmf_radial_log_density(target.L1), nodes=4096)
    inits = np.broadcast_to(target.mode, (4000, 3)).copy()
    errors = []
    for step, n_iters in ((0.05, 100), (0.005, 400)):
        trace = rlmc_run(inits, n_iters, target, LmcConfig(step), seed=3, block_size=1000)
        assert not np.any(trace.failed)
        mean, _ = frechet_stats(trace.states[-1], mode)
        errors.append(abs(mean - truth))
    assert errors[0] > errors[1]
    assert errors[0] > 0.05 * truth
