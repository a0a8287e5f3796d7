import pytest

_ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    """Store one acceptance line: record("A1", ok, "detail")."""

    def _record(tag: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE[tag] = (ok, detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[tag]
        terminalreporter.write_line(f"{tag} {'PASS' if ok else 'FAIL'}  {detail}")
