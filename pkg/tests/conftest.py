import numpy as np
import pytest

from sampler.manifolds import SPD, Circle, Sphere
from sampler.rng import chain_stream


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo tests with 1e5 or more draws")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def stream():
    return chain_stream(2024, 0)


MANIFOLDS = [Circle(), Sphere(2), Sphere(5), SPD(3)]


def random_points(manifold, n, rng):
    """Points spread around the manifold (SPD: within distance ~1 of I)."""
    if isinstance(manifold, SPD):
        eye = np.broadcast_to(np.eye(manifold.m), (n, manifold.m, manifold.m))
        return manifold.exp(eye, manifold.random_tangent(eye, 0.3, rng))
    return manifold.random_uniform(n, rng)
