from __future__ import annotations

import numpy as np
import pytest

from trajent.ensemble import haar_random_state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def haar_states(rng):
    return haar_random_state(rng, 200)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []
    config.addinivalue_line("markers", "slow: long-running Monte Carlo checks")


@pytest.fixture
def report(request):
    """Collect one summary line per acceptance criterion."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def emit(line: str) -> None:
        lines.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
