from pathlib import Path

import pytest

from acstark.core import Grid, default_params

ROOT = Path(__file__).resolve().parents[1]
EXAMPLES = ROOT / "src" / "acstark" / "examples"


@pytest.fixture
def params():
    return default_params()


@pytest.fixture
def grid():
    return Grid()


@pytest.fixture
def examples_dir():
    return EXAMPLES


# acceptance criteria outcomes, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def add(number, passed, detail, seconds):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  ({seconds:.1f} s)  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
