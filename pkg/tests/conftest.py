import numpy as np
import pytest

from flatmc.density import GaussianMixture


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mix1d():
    """Two well-separated modes on the line."""
    return GaussianMixture([0.4, 0.6], [[-2.0], [2.5]], [1.0, 2.0])


@pytest.fixture
def mix3d(rng):
    means = rng.standard_normal((2, 3))
    return GaussianMixture([0.3, 0.7], means, [0.8, 1.7])


def rel_err(a, b, floor=1e-12):
    """|a - b| / max(|b|, floor); the floor keeps near-stationary points meaningful."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
