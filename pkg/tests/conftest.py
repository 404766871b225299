import sys

import numpy as np
import pytest
from hypothesis import settings

from clogsim.table import build_table

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def table():
    """Default table: r_min=0.02, dr=0.01, n_theta=64, n_rho=16."""
    return build_table()


@pytest.fixture(scope="session")
def coarse_table():
    return build_table(0.05, 0.05, (32, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
