import pytest

_VERDICTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record a criterion's verdict for the summary, then assert it."""

    def record(name: str, ok: bool, detail: str) -> None:
        _VERDICTS[name] = (bool(ok), detail)
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS, key=lambda n: int(n[1:])):
        ok, detail = _VERDICTS[name]
        terminalreporter.write_line(f"{name:>4} {'PASS' if ok else 'FAIL'}  {detail}")
