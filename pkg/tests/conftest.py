import sys

import pytest

from markerfind.synth import make_registry


@pytest.fixture(scope="session")
def patterns():
    """16 registered patterns plus 4 unregistered ones, all mutually dissimilar."""
    return make_registry(16, seed=0, extra=4)


@pytest.fixture(scope="session")
def registry(patterns):
    return patterns[0]


@pytest.fixture(scope="session")
def unregistered(patterns):
    return patterns[1]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
