import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, h, w, density, lo=1.0, hi=10.0):
    """Random prior and anchors with roughly ``density`` anchored pixels."""
    prior = rng.uniform(lo, hi, size=(h, w))
    anchors = rng.random((h, w)) < density
    sparse = np.where(anchors, rng.uniform(lo, hi, size=(h, w)), 0.0)
    return sparse, prior


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
