import pytest

from cusumac import gaussian_mean_shift
from cusumac.censoring import optimize


@pytest.fixture(scope="session")
def pair():
    """The Gaussian mean-shift pair used throughout: N(0,1) -> N(0.5,1)."""
    return gaussian_mean_shift(0.0, 0.5, 1.0)


@pytest.fixture(scope="session")
def pairs3(pair):
    return [pair, pair, pair]


@pytest.fixture(scope="session")
def strategy_cache(pair):
    """Memoized optimal strategies keyed by rate; the optimizer is not free."""
    cache = {}

    def get(eps):
        if eps not in cache:
            cache[eps] = optimize(pair, eps)
        return cache[eps]

    return get
