import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def random_step(gen, horizon=1.0, k=None):
    """Random right-continuous step path with ``k`` interior jumps."""
    from stein_queues.paths import step_path

    k = int(gen.integers(1, 10)) if k is None else k
    times = np.sort(gen.uniform(0.01, 0.99, k)) * horizon
    return step_path(horizon, float(gen.normal()), times, gen.normal(size=k))


def random_linear(gen, horizon=1.0, k=None):
    from stein_queues.paths import linear_path

    k = int(gen.integers(2, 12)) if k is None else k
    knots = np.concatenate([[0.0], np.sort(gen.uniform(0.02, 0.98, k)), [1.0]]) * horizon
    return linear_path(knots, gen.normal(size=knots.size))


# acceptance criteria report one line each; the lines are echoed in the summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
