from collections import defaultdict

import pytest

_RESULTS = defaultdict(list)


@pytest.fixture
def acceptance():
    """Record ``(criterion, part, ok, detail)`` for the summary table."""

    def record(criterion, part, ok, detail=""):
        _RESULTS[criterion].append((part, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(_RESULTS):
        parts = _RESULTS[criterion]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        tr.write_line(f"criterion {criterion:>2}: {verdict}")
        for part, ok, detail in parts:
            tr.write_line(f"    [{'ok' if ok else 'FAIL'}] {part}: {detail}")
