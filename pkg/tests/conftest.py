import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aris_empc.scenario import ClusterSpec, ScenarioConfig, SolverSettings, UserSet

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Filled by tests/test_acceptance.py, printed at the end of the session.
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def shipped_config():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def shipped_users(shipped_config):
    return shipped_config.users()


@pytest.fixture(scope="session")
def small_config():
    """A short mission with few users and elements, fast enough for closed-loop tests."""
    return ScenarioConfig(
        num_ris_elements=8,
        num_users=6,
        num_steps=4,
        horizon=2,
        start_pos=(500.0, 500.0),
        target_pos=(500.0, 800.0),
        initial_velocity=(0.0, 30.0),
        clusters=ClusterSpec(((400.0, 650.0), (700.0, 700.0)), (4, 2), (30.0, 30.0)),
        solver=SolverSettings(max_iters=150),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_users(rng, k, area=(1300.0, 1100.0)):
    xy = rng.uniform([0.0, 0.0], area, size=(k, 2))
    return UserSet(np.column_stack([xy, np.zeros(k)]))
