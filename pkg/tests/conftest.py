import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eikonal_lab.grid import GridGeometry, Problem, SpeedModel

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def all_exit_problem(n: int) -> Problem:
    g = GridGeometry(n)
    return Problem(g, SpeedModel.constant(), tuple((i, 0.0) for i in range(g.size)), "filled")


def random_problem(n: int, seed: int, n_exits: int = 3, speed: str = "sine") -> Problem:
    """Random exits (random q) on an arbitrary-size grid."""
    rng = np.random.default_rng(seed)
    g = GridGeometry(n)
    idx = rng.choice(g.size, size=min(n_exits, g.size), replace=False)
    exits = tuple((int(i), float(q)) for i, q in zip(idx, rng.uniform(0, 0.3, len(idx))))
    if speed == "sine":
        model = SpeedModel.sine_product(float(rng.uniform(0, 0.9)), float(rng.integers(1, 5)))
    elif speed == "checkerboard":
        model = SpeedModel.checkerboard(int(rng.integers(2, 6)))
    else:
        model = SpeedModel.constant(float(rng.uniform(0.5, 2)))
    return Problem(g, model, exits, f"random{seed}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
