import math

import pytest

from gbverify.forms import ChartDomain
from gbverify.thom import make_profile


@pytest.fixture(scope="session")
def profile():
    return make_profile()


@pytest.fixture
def sphere_chart():
    return ChartDomain("S2", ("theta", "phi"), ((0.0, math.pi), (0.0, 2 * math.pi)), True, {"phi"})


@pytest.fixture
def plane():
    return ChartDomain("R2", ("x", "y"), ((0.0, 1.0), (0.0, 1.0)), True)


@pytest.fixture
def cube():
    return ChartDomain("R3", ("x", "y", "z"), ((0.2, 1.2),) * 3, True)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the assertion is left to the test."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
