import numpy as np
import pytest

from ricci_fisher.geometry import Conformal2D, ManifoldGrid

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance_line():
    """Record one pass/fail line for the terminal summary."""

    def record(name: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append((name, bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def wavy_torus(n: int, amp: float = 0.1, length: float = 1.0) -> Conformal2D:
    grid = ManifoldGrid.torus(n, length)
    x, _ = grid.coordinates()
    return Conformal2D(grid, amp * np.sin(2 * np.pi * x))
