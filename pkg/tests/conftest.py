import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
CRITERIA = {}


def record(number, ok, detail):
    CRITERIA[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(CRITERIA[number])
    return ok


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
