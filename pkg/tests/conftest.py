import numpy as np
import pytest

from anycastlb.model import SystemInstance, make_instance


@pytest.fixture
def two_node():
    """The canonical two-node instance: node a's poor self-correlation (0.1)
    drives node b into uncontrollable overload under the greedy policy."""
    return make_instance([[0.1, 0.9], [0.5, 0.5]], [1.0, 1.0], [0.7, 0.7])


@pytest.fixture
def symmetric_pair():
    """Well-coupled two-node instance with an interior equilibrium at (0.14, 0.14)."""
    return make_instance([[0.8, 0.2], [0.2, 0.8]], [5.0, 5.0], [0.7, 0.7])


def random_instance(rng: np.random.Generator, n: int, *, a_scale: float = 1.0,
                    threshold: float = 0.7, strictly_positive: bool = True) -> SystemInstance:
    """Random row-stochastic instance for property tests."""
    raw = rng.uniform(0.05 if strictly_positive else 0.0, 1.0, size=(n, n))
    corr = raw / raw.sum(axis=1, keepdims=True)
    arrivals = rng.uniform(0.0, a_scale, size=n)
    return SystemInstance(
        n=n, corr=corr, arrivals=arrivals,
        thresholds=np.full(n, threshold),
        eta=np.ones(n),
        gamma_cost=rng.uniform(1.0, 10.0, size=n),
        d=rng.uniform(0.0, 1.0, size=n),
    )
