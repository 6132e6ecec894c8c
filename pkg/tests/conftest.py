from __future__ import annotations

import numpy as np
import pytest

from slowfast.core_system import Params

# reference parameter sets
P_MAIN = Params(eps=0.01, nu=0.00870134, a=-0.3, b=-1.0, c=1.0)
P_SAO = Params(eps=0.01, nu=0.00870134, a=0.01, b=-1.0, c=1.0)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: integration-heavy test (minutes)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance lines, printed together at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
