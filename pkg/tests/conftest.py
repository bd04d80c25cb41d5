import pytest

from fixtures import scenario

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def world():
    """(tree, userbase) for the Netflix/Amazon/User1 scenario."""
    return scenario()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
