"""Shared pytest wiring: collects one summary line per shipped guarantee."""

import pytest

_RESULTS: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record a PASS/FAIL line for the end-of-run summary, then assert."""

    def check(name: str, passed: bool, detail: str) -> None:
        _RESULTS.append(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        assert passed, f"{name}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _RESULTS:
        terminalreporter.section("acceptance summary")
        for line in _RESULTS:
            terminalreporter.write_line(line)
