import numpy as np
import pytest

from s00lab.lattice import GridSpec, random_band_limited


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1():
    return GridSpec.with_scale(1, 128, R=4)


def band_fields(grid, rng, count, band=4.0):
    return [random_band_limited(grid, rng, band) for _ in range(count)]


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
