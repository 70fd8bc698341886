from __future__ import annotations

import pytest

_ACCEPTANCE: list[tuple[int, bool, str]] = []


class _Recorder:
    def __call__(self, criterion: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((criterion, bool(passed), detail))
        print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def acceptance() -> _Recorder:
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(
            f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        )
