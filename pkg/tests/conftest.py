import pytest

from bran.core import SystemConfig


@pytest.fixture
def s4_grid():
    """s = 4 with mean block times 0.04 and 0.2 at three traffic intensities."""
    return [SystemConfig.from_rho(rho, 1.0 / tb, 4) for tb in (0.04, 0.2) for rho in (0.1, 0.4, 0.7)]


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
