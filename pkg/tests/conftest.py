import numpy as np
import pytest

from bmvlab.core import ingest


@pytest.fixture
def example_problem():
    """Both sufficient conditions hold for this one (b canonical)."""
    return ingest([[1, 2, 1], [2, 0, -1], [1, -1, 0]], [0, 2, 1])


@pytest.fixture
def random_problem():
    rng = np.random.default_rng(11)
    A = rng.uniform(-2, 2, (3, 3))
    A = np.triu(A) + np.triu(A, 1).T
    return ingest(A, [0.4, 2.6, 1.3])


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
