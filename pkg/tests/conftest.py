import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crmag.spectral import SpectralGrid, VectorField

settings.register_profile("crmag", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("crmag")

ACCEPTANCE_LINES = []


def random_field(grid: SpectralGrid, channels: int, seed: int) -> VectorField:
    rng = np.random.default_rng(seed)
    return VectorField(grid, rng.standard_normal(grid.counts + (channels,)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
