import pytest

_LINES: list = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the pass flag so tests can assert on it."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: _sort_key(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def _sort_key(label: str):
    digits = "".join(c for c in label if c.isdigit())
    return int(digits or 0), label
