from __future__ import annotations

import numpy as np
import pytest

_ACCEPTANCE: list[str] = []


class AcceptanceRecorder:
    def check(self, name: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line


@pytest.fixture
def acceptance() -> AcceptanceRecorder:
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def four_points() -> np.ndarray:
    return np.array([[0.0], [1.0], [10.0], [11.0]])


@pytest.fixture
def write_text(tmp_path):
    def _write(name: str, text: str):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
