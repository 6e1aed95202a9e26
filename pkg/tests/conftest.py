import numpy as np
import pytest

from gravistoch.constants import natural_units
from gravistoch.lattice import enumerate_modes, single_mode_grid


@pytest.fixture
def c():
    return natural_units()


@pytest.fixture
def one_mode():
    return single_mode_grid(2 * np.pi)


@pytest.fixture(scope="session")
def grid1():
    return enumerate_modes(2 * np.pi, 1)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
