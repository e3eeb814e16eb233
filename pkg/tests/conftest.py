import os
import sys
import tempfile

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# keep solver caches out of the user's home directory
os.environ.setdefault("AWGN_LAB_CACHE", tempfile.mkdtemp(prefix="awgn_lab_test_cache_"))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def refs():
    """Reference capacities shared across test modules."""
    from awgn_lab.capacity import reference_capacity

    store = {}

    def get(A):
        if A not in store:
            store[A] = reference_capacity(A)
        return store[A]

    return get


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
