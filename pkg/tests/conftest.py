"""Shared fixtures and the acceptance-criteria reporting hook."""

import numpy as np
import pytest

_CRITERION_LINES = {}


def record_criterion(number: int, description: str, passed: bool) -> None:
    """Register a criterion outcome; echoed in the terminal summary."""
    _CRITERION_LINES[number] = (description, passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERION_LINES):
        description, passed = _CRITERION_LINES[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} {verdict}: {description}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
