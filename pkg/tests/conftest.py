import time

import pytest

_RESULTS = []


class _Criterion:
    """Records a pass/fail line for one acceptance criterion."""

    def __init__(self, number, title, budget):
        self.number = number
        self.title = title
        self.budget = budget
        self.start = time.perf_counter()

    def finish(self, ok, detail):
        elapsed = time.perf_counter() - self.start
        in_time = elapsed < self.budget
        status = "PASS" if ok and in_time else "FAIL"
        line = (f"criterion {self.number:>2} {status}: {self.title}; {detail}; "
                f"{elapsed:.1f} s of {self.budget:g} s")
        _RESULTS.append((self.number, line))
        print(line)
        assert ok, line
        assert in_time, line


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)
