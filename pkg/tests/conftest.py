from __future__ import annotations

from pathlib import Path

import pytest

from streamkg.engine import data_dir

# Acceptance-criterion verdicts recorded during the run; printed as one
# pass/fail line each in the terminal summary.
_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def suite_dir() -> Path:
    return Path(data_dir()) / "suite"


@pytest.fixture(scope="session")
def kb_path() -> Path:
    return Path(data_dir()) / "traffic.kb"


@pytest.fixture()
def criterion():
    """Record one acceptance-criterion verdict and assert it."""

    def check(name: str, ok: bool, detail: str = "") -> None:
        _CRITERIA.append((name, bool(ok), detail))
        assert ok, f"acceptance criterion {name!r} failed: {detail}"

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        verdict = "PASS" if ok else "FAIL"
        line = f"[{verdict}] {name}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)
