import numpy as np
import pytest

from finitemc.kernel import Dist, Kernel, StateSpace
from finitemc.metrics import DistanceFn, metric_closure

TWO_STATE = [[0.7, 0.3], [0.2, 0.8]]
CYCLE3 = [[0, 1, 0], [0, 0, 1], [1, 0, 0]]
BLOCK3 = [[1, 0, 0], [0, 0.5, 0.5], [0, 0.5, 0.5]]


def random_kernel(rng, n, zero_frac=0.0):
    T = rng.random((n, n))
    if zero_frac:
        T[rng.random((n, n)) < zero_frac] = 0.0
        T[np.arange(n), rng.integers(0, n, n)] += rng.random(n) + 0.1
    T /= T.sum(axis=1, keepdims=True)
    return Kernel.from_matrix(T)


def random_dist(rng, space, zero_frac=0.0):
    p = rng.dirichlet(np.ones(space.n))
    if zero_frac:
        p[rng.random(space.n) < zero_frac] = 0.0
        if p.sum() == 0:
            p[0] = 1.0
    return Dist(space, p / p.sum())


def random_metric(rng, space, scale=5.0):
    n = space.n
    G = rng.random((n, n)) * scale + 0.01
    G = (G + G.T) / 2
    np.fill_diagonal(G, 0.0)
    g = metric_closure(G)
    g = (g + g.T) / 2
    return DistanceFn(space, g)


@pytest.fixture
def two_state():
    return Kernel.from_matrix(TWO_STATE)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
