import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from divratchet.model import ModelParams  # noqa: E402

_CRITERIA = []


@pytest.fixture(scope="session")
def params():
    return ModelParams(4.0, 2.0, 0.1)


@pytest.fixture
def criterion():
    """Record a PASS/FAIL line for the acceptance summary, then assert."""

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" [{detail}]" if detail else "")
        _CRITERIA.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA):
        terminalreporter.write_line(line)
