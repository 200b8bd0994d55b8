import numpy as np
import pytest

from gatraj.perf import limit_threads, tune_allocator

tune_allocator()
_LIMITS = limit_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_ACCEPTANCE = []


@pytest.fixture
def accept(capsys):
    """Print one PASS/FAIL line for a criterion, then fail the test if it failed."""

    def report(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
