import pytest

# filled by test_acceptance.py; printed once at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)


@pytest.fixture
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
