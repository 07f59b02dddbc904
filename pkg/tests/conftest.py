"""Shared fixtures plus the acceptance-criteria summary hook."""

from __future__ import annotations

import numpy as np
import pytest

CRITERION_LINES: list[tuple[int, str]] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Register one acceptance criterion's outcome for the terminal summary."""
    verdict = "PASS" if passed else "FAIL"
    CRITERION_LINES.append((number, f"criterion {number:2d}: {verdict} - {detail}"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERION_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
