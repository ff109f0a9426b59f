import pytest

# (criterion number, verdict, detail) appended by the acceptance tests
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``with criterion(3) as note: ...; note("detail")``.  The verdict is
    FAIL if the block raises.
    """
    class _Check:
        def __init__(self, number):
            self.number = number
            self.detail = ""

        def __call__(self, detail):
            self.detail = detail

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            verdict = "PASS" if exc_type is None else "FAIL"
            line = f"criterion {self.number}: {verdict}  {self.detail}".rstrip()
            ACCEPTANCE_LINES.append(line)
            print(line)
            return False

    return _Check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
