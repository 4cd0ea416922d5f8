import pytest
from hypothesis import settings

settings.register_profile("qgtlab", deadline=None, max_examples=40)
settings.load_profile("qgtlab")

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def add(number, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
