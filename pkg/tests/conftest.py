import numpy as np
import pytest

ACCEPTANCE_LINES = []


def report(name: str, passed: bool, detail: str = "") -> None:
    """Record one acceptance verdict; all verdicts are repeated in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] {name}" + (f" :: {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
