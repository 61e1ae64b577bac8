import numpy as np
import pytest

from wellposed.measures import DiscreteMeasure, Grid1D, normalize


def random_grid_measure(rng, grid, sparse=False):
    """Mixture of a few Gaussian bumps; with ``sparse`` some nodes are zeroed."""
    x = grid.nodes
    raw = np.zeros_like(x)
    for _ in range(rng.integers(1, 4)):
        c = rng.uniform(grid.lower, grid.upper)
        w = rng.uniform(0.02, 0.3) * (grid.upper - grid.lower)
        raw += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((x - c) / w) ** 2)
    if sparse:
        raw[rng.random(x.size) < 0.3] = 0.0
        if not raw.any():
            raw[x.size // 2] = 1.0
    return normalize(grid, raw)


def random_discrete(rng, k, lo=0.0, hi=1.0):
    locs = np.sort(rng.choice(np.linspace(lo, hi, 4 * k + 3), size=k, replace=False))
    w = rng.random(k) + 0.05
    return DiscreteMeasure(locs, w / w.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_grid():
    return Grid1D(0.0, 1.0, 201)


# -- acceptance summary ----------------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance test under its number."""

    def record(number, text, passed):
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"
        print(ACCEPTANCE_LINES[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
