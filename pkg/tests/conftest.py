import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lrorder.table_model import ContingencyTable

# every randomized test is reproducible: hypothesis runs derandomized and
# numpy generators are created from fixed seeds inside the tests
settings.register_profile(
    "pinned", derandomize=True, deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pinned")

ACCEPTANCE_LINES = []

# the cross-classified example table used throughout
EXAMPLE_COUNTS = [[11, 8, 8, 5], [6, 4, 10, 12]]


@pytest.fixture
def example_table():
    return ContingencyTable(EXAMPLE_COUNTS)


def random_table(rng, J, high=30, low=0):
    """Counts uniform on low..high, redrawn until both rows are nonempty."""
    while True:
        counts = rng.integers(low, high + 1, size=(2, J))
        if np.all(counts.sum(axis=1) > 0):
            return ContingencyTable(counts)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
