import numpy as np
import pytest

from cliffsynth.targets import random_walk_target


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def rand_tableau(n, rng, d=None):
    """Generic symplectic test point: a random walk endpoint."""
    t, _ = random_walk_target(n, 3 * n * n if d is None else d, rng)
    return t


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, after capture is undone."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None) if mod else None
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
