"""Shared fixtures; the acceptance suite reports one line per criterion."""

import contextlib

import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Context manager recording whether an acceptance criterion's body passed."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        _RESULTS[number] = (title, False)
        yield
        _RESULTS[number] = (title, True)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}")
