import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hetrobust.fixtures import bounded_example, location_model, two_group
from hetrobust.model import build_problem

settings.register_profile(
    "default", max_examples=100, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def random_problem(rng: np.random.Generator, n=None, k=None, q=None, unit_column=False):
    """Gaussian design with an intercept; optionally plants a unit-vector column."""
    n = int(rng.integers(6, 14)) if n is None else n
    k = int(rng.integers(2, min(5, n - 2))) if k is None else k
    q = int(rng.integers(1, k + 1)) if q is None else q
    X = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
    if unit_column:
        X[:, -1] = 0.0
        X[int(rng.integers(n)), -1] = 1.0
    R = rng.standard_normal((q, k))
    r = rng.standard_normal(q)
    return build_problem(X, R, r)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def loc10():
    return location_model(10)


@pytest.fixture(scope="session")
def tg3():
    return two_group(30, 3)


@pytest.fixture(scope="session")
def bounded():
    return bounded_example()
