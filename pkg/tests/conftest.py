import pytest

from fslt.model import load_params

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return load_params()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
