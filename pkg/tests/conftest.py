import numpy as np
import pytest

from porous_spde.geometry import Grid, build_basis


@pytest.fixture(scope="session")
def basis255():
    return build_basis(Grid(255), 64)


@pytest.fixture(scope="session")
def basis63():
    return build_basis(Grid(63))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_laplacian(n: int) -> np.ndarray:
    """Second-difference matrix with zero Dirichlet ghosts, built entry by entry."""
    h = 1.0 / (n + 1)
    L = np.zeros((n, n))
    for i in range(n):
        L[i, i] = -2.0
        if i > 0:
            L[i, i - 1] = 1.0
        if i < n - 1:
            L[i, i + 1] = 1.0
    return L / h**2


def sine_coefficients(x: np.ndarray) -> np.ndarray:
    """Direct O(n^2) expansion coefficients h sum_i x_i sqrt(2) sin(k pi xi_i)."""
    n = x.shape[0]
    h = 1.0 / (n + 1)
    xi = h * np.arange(1, n + 1)
    k = np.arange(1, n + 1)
    return h * np.sqrt(2.0) * np.sin(np.pi * np.outer(k, xi)) @ x


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
