import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import i0, i1

from sampler.errors import ConfigError, NumericalError, RejectionCapError
from sampler.manifolds import SPD, Circle, Point, Sphere
from sampler.proximal import (
    GeodesicRandomWalk,
    SamplerConfig,
    SeriesRejection,
    TheoryParams,
    TruncatedKernelRejection,
    chain_summaries,
    expected_rejection_bound,
    initial_points,
    proximal_step,
    resolve_sampler,
    run_chain,
    run_chains,
    varadhan_parameters,
)
from sampler.rng import chain_stream
from sampler.targets import circle_cosine, von_mises_fisher, zero_potential


@pytest.mark.parametrize("kwargs, key", [
    ({"eta": 0.0}, "sampler.eta"),
    ({"eta": 0.1, "rejection_cap": 0}, "sampler.rejection_cap"),
    ({"eta": 0.1, "zeta": 0.0}, "sampler.zeta"),
    ({"eta": 0.1, "proposal_t": -1.0}, "sampler.proposal_t"),
    ({"eta": 0.1, "proposal_center": "origin"}, "sampler.proposal_center"),
    ({"eta": 0.1, "mbi_oracle": GeodesicRandomWalk(0)}, "sampler.mbi_substeps"),
])
def test_config_validation_names_the_key(kwargs, key):
    with pytest.raises(ConfigError) as info:
        SamplerConfig(**kwargs)
    assert info.value.key == key


def test_curvature_table():
    assert TheoryParams.for_manifold(Circle()).kappa == 0.0
    assert TheoryParams.for_manifold(Sphere(2)).kappa == 1.0
    assert TheoryParams.for_manifold(SPD(3)).kappa == pytest.approx(-2.75)
    with pytest.raises(ConfigError):
        TheoryParams.for_manifold(Circle(), alpha=-1.0)


def test_varadhan_parameters_for_the_vmf_run():
    L1 = 10.0 * math.sqrt(10.0**2 + 0.1**2 + 2.0**2)
    p = varadhan_parameters(L1, 2, 1e-3)
    c = 1.0 / math.log(1e3)
    assert p.c_eps == pytest.approx(c)
    assert p.eta == pytest.approx(c / (2.0 * L1**2))
    assert p.t == pytest.approx(2.0 * p.eta)
    assert p.T == pytest.approx(c / (3.0 * L1**2))
    with pytest.raises(ConfigError):
        varadhan_parameters(L1, 2, 1.5)


def test_expected_rejection_bound():
    c = 1.0 / math.log(1e3)
    at2 = expected_rejection_bound(2, c)
    assert at2 == pytest.approx(math.exp(c + 1.0) * 3.0 / (1.0 - math.exp(-0.5)))
    # ((d+1)/(d-1))^(d/2) decreases to e
    assert expected_rejection_bound(50, c) < at2
    assert expected_rejection_bound(10**6, c) == pytest.approx(
        math.exp(c + 2.0) / (1.0 - math.exp(-0.5)), rel=1e-5)
    with pytest.raises(ConfigError):
        expected_rejection_bound(1, c)


def test_resolve_sampler_builds_a_kernel_on_the_circle():
    cfg = SamplerConfig(eta=0.2, mbi_oracle=SeriesRejection(), rhk_oracle=TruncatedKernelRejection())
    resolved = resolve_sampler(Circle(), cfg)
    assert resolved.kernel is not None
    assert resolved.kernel.t == 0.2
    assert resolved.fallbacks == 0


def test_resolve_sampler_falls_back_for_tiny_steps_on_spheres():
    cfg = SamplerConfig(eta=1e-6, mbi_oracle=SeriesRejection(), rhk_oracle=TruncatedKernelRejection())
    resolved = resolve_sampler(Sphere(2), cfg)
    assert resolved.kernel is None
    assert resolved.fallbacks == 2
    assert not isinstance(resolved.cfg.mbi_oracle, SeriesRejection)


def test_resolve_sampler_rejects_series_on_spd():
    with pytest.raises(ConfigError):
        resolve_sampler(SPD(3), SamplerConfig(eta=0.1, mbi_oracle=SeriesRejection()))


def test_resolve_sampler_rejects_conflicting_levels():
    cfg = SamplerConfig(eta=0.2, mbi_oracle=SeriesRejection(5), rhk_oracle=TruncatedKernelRejection(6))
    with pytest.raises(ConfigError):
        resolve_sampler(Circle(), cfg)


def test_run_chains_is_deterministic_and_thread_count_free(rng):
    target = circle_cosine(2.0)
    cfg = SamplerConfig(eta=0.2)
    inits = rng.uniform(0.0, 2.0 * math.pi, size=40)
    a = run_chains(inits, 5, target, cfg, seed=11, block_size=10)
    b = run_chains(inits, 5, target, cfg, seed=11, block_size=10, workers=3)
    c = run_chains(inits, 5, target, cfg, seed=12, block_size=10)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.rhk_rejections, b.rhk_rejections)
    assert not np.array_equal(a.states, c.states)
    assert a.states.shape == (6, 40)
    assert np.array_equal(a.states[0], inits)


def test_single_iteration_is_one_proximal_step():
    target = von_mises_fisher(2.0, [0.0, 0.0, 1.0])
    cfg = SamplerConfig(eta=0.05)
    x0 = Point(Sphere(2), np.array([1.0, 0.0, 0.0]))
    trace = run_chain(x0, 1, target, cfg, seed=3)
    _, x1, _ = proximal_step(x0.coords[None], target, cfg, None, chain_stream(3, 0))
    assert np.array_equal(trace.states[1, 0], x1[0])
    assert isinstance(trace.point(1), Point)


def test_run_chain_checks_the_manifold():
    with pytest.raises(ConfigError):
        run_chain(Point(Circle(), np.array(0.0)), 1, zero_potential(Sphere(2)), SamplerConfig(eta=0.1))


def test_uniform_law_is_invariant_under_zero_potential(stream):
    sphere = Sphere(2)
    inits = sphere.random_uniform(20000, stream)
    trace = run_chains(inits, 5, zero_potential(sphere), SamplerConfig(eta=0.3), seed=5, block_size=5000)
    z = trace.states[-1][:, 2]
    se = math.sqrt(1.0 / 3.0 / z.size)
    assert abs(np.mean(z)) < 5.0 * se
    assert np.mean(z**2) == pytest.approx(1.0 / 3.0, abs=0.015)


@pytest.mark.slow
def test_von_mises_chains_reach_the_target():
    # E[cos theta] = I1(beta) / I0(beta) under the von Mises law
    beta = 2.0
    target = circle_cosine(beta)
    inits = np.full(2000, math.pi)
    cfg = SamplerConfig(eta=0.2, mbi_oracle=SeriesRejection(), rhk_oracle=TruncatedKernelRejection())
    trace = run_chains(inits, 25, target, cfg, seed=1, block_size=500)
    c = np.cos(trace.states[-1])
    assert abs(np.mean(c) - i1(beta) / i0(beta)) < 5.0 * np.std(c) / math.sqrt(c.size)
    assert trace.fallbacks == 0
    assert not np.any(trace.failed)


def test_capped_chains_are_flagged_or_raise():
    target = von_mises_fisher(50.0, [0.0, 0.0, 1.0])
    cfg = SamplerConfig(eta=0.01, rejection_cap=1)
    inits = np.broadcast_to(np.array([1.0, 0.0, 0.0]), (50, 3)).copy()
    trace = run_chains(inits, 3, target, cfg, seed=0)
    assert np.any(trace.failed)
    assert np.all(np.isfinite(trace.states))
    with pytest.raises(RejectionCapError):
        run_chains(inits, 3, target, cfg, seed=0, fail_fast=True)


def test_initial_points(rng):
    spd = SPD(3)
    pts = initial_points(spd, 4, "radius", rng, radius=2.0)
    assert pts.shape == (4, 3, 3)
    assert np.allclose(spd.dist(pts, np.eye(3)), 2.0)
    assert initial_points(Circle(), 3, "point", rng, point=1.5).tolist() == [1.5, 1.5, 1.5]
    assert initial_points(Sphere(2), 7, "uniform", rng).shape == (7, 3)
    with pytest.raises(ConfigError):
        initial_points(Sphere(2), 2, "radius", rng)
    with pytest.raises(ConfigError):
        initial_points(Sphere(2), 2, "everywhere", rng)


def test_chain_summaries_start_at_zero(rng):
    trace = run_chains(rng.uniform(size=6), 3, circle_cosine(1.0), SamplerConfig(eta=0.2))
    rows = chain_summaries(trace)
    assert [r["iter"] for r in rows] == [0, 1, 2, 3]
    assert rows[0]["rhk_rej_mean"] == 0.0
    assert all(r["mbi_rej_mean"] >= 0.0 for r in rows)


def test_at_least_one_iteration():
    with pytest.raises(ConfigError):
        run_chains(np.zeros(2), 0, circle_cosine(1.0), SamplerConfig(eta=0.1))


def _breaks_near_pi(target):
    def guarded(fn):
        def wrapped(x):
            x = np.asarray(x, dtype=float)
            if np.any(np.abs(x - math.pi) < 1.0):
                raise NumericalError("potential undefined near pi")
            return fn(x)
        return wrapped
    return replace(target, f=guarded(target.f), euclidean_grad_f=guarded(target.euclidean_grad_f))


def test_one_broken_chain_does_not_fail_its_block():
    target = _breaks_near_pi(circle_cosine(1.0))
    inits = np.zeros(30)
    inits[7] = math.pi
    trace = run_chains(inits, 3, target, SamplerConfig(eta=0.02), seed=4, block_size=30)
    assert trace.failed.sum() == 1
    assert trace.failed[7]
    assert np.all(trace.states[:, 7] == math.pi)
    assert not np.array_equal(trace.states[-1, :7], inits[:7])
    with pytest.raises(NumericalError):
        run_chains(inits, 3, target, SamplerConfig(eta=0.02), seed=4, block_size=30, fail_fast=True)
