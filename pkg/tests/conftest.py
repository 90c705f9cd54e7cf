import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, max_examples=25, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("repo")


@pytest.fixture
def scalar():
    from ouregularity.models import make_scalar
    return make_scalar(-1.0, 1.0, 0.0)


@pytest.fixture
def dense2():
    from ouregularity.models import make_dense_example
    return make_dense_example()


def random_psd(rng, N, rank=None):
    G = rng.standard_normal((N, rank or N))
    return G @ G.T


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one verdict line per acceptance criterion, then assert it."""

    def record(number, label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({label})"
        ACCEPTANCE_LINES.append(line + (f": {detail}" if detail else ""))
        print(ACCEPTANCE_LINES[-1])
        assert ok, ACCEPTANCE_LINES[-1]

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
