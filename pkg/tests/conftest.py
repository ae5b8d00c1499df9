import numpy as np
import pytest

from dlab.grid import Field, Grid

# (criterion, passed, detail) rows collected by the acceptance suite
_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; the test still asserts on ``passed``."""

    def record(name: str, passed: bool, detail: str = ""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    n_ok = sum(ok for _, ok, _ in _ACCEPTANCE)
    tr.write_line(f"{n_ok}/{len(_ACCEPTANCE)} criteria passed")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(grid: Grid, rng, carrier=None) -> Field:
    v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return Field(grid, v, carrier)


def plane_wave(grid: Grid, k) -> Field:
    X = grid.coords()
    return Field(grid, np.exp(1j * sum(kj * x for kj, x in zip(k, X))))
