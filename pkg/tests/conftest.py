import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hcub import TreeSchema  # noqa: E402


@pytest.fixture
def schema3():
    return TreeSchema.of(("tour", "system"), ("round", "system"), ("cohort", "user"))


@pytest.fixture
def schema2():
    return TreeSchema.of(("tour", "system"), ("cohort", "user"))


@pytest.fixture
def repo_root():
    return Path(__file__).resolve().parents[1]


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; printed again in the terminal summary."""

    def report(label: str, passed: bool | None, detail: str) -> bool:
        status = "N/A " if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {label}: {status} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return bool(passed) or passed is None

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
