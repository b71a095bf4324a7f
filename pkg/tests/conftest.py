import numpy as np
import pytest

from ntband.model import MarketParams, two_asset_market

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def market():
    return two_asset_market()


@pytest.fixture
def uncorrelated_market():
    return two_asset_market().replace(rho=np.eye(2))


def random_market(rng, n=None, k=None):
    """Random valid market: correlations from a normalized Gram matrix."""
    n = n or int(rng.integers(1, 5))
    w = rng.normal(size=(n, n + 2))
    c = w @ w.T
    d = np.sqrt(np.diag(c))
    rho = c / np.outer(d, d)
    rho = (rho + rho.T) / 2
    np.fill_diagonal(rho, 1.0)
    return MarketParams(
        r=float(rng.uniform(0.0, 0.1)),
        mu=rng.uniform(0.0, 0.3, size=n),
        sigma=rng.uniform(0.1, 0.6, size=n),
        rho=rho,
        k=float(rng.uniform(1e-4, 0.05)) if k is None else k,
    )
