import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stratokeeper.noise import NoiseSpec
from stratokeeper.windfield import GridAxes, WindField, WindGrid, synthesize_grid, SyntheticWindSpec

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def constant_grid(u: float, v: float, half_width_km: float = 2400.0) -> WindGrid:
    axes = GridAxes.centered(half_width_km=half_width_km)
    shape = axes.shape
    return WindGrid(axes, np.full(shape, float(u)), np.full(shape, float(v)))


@pytest.fixture(scope="session")
def calm_field() -> WindField:
    return WindField(constant_grid(0.0, 0.0), NoiseSpec(amplitude=0.0))


@pytest.fixture(scope="session")
def day_field() -> WindField:
    grid = synthesize_grid(SyntheticWindSpec(seed=1), GridAxes.centered())
    return WindField(grid, NoiseSpec(seed=3, amplitude=1.0))


# Acceptance verdicts, echoed in the terminal summary.
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
