import numpy as np
import pytest

from artifact.grid import make_grid


@pytest.fixture(scope="session")
def default_grid():
    """The verification grid: [-200, 200] with 2^14 nodes."""
    return make_grid(200.0, 2**14)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(100.0, 4096)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sup(a) -> float:
    return float(np.max(np.abs(a)))


# criterion number -> (title, passed, detail, seconds), filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail, secs = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} [{secs:.1f} s]")
