from __future__ import annotations

import pytest

from delayconv import NoiseModel, SpectralModel, StepGrid, solve_all

# (criterion, passed, detail) rows collected by the acceptance suite
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((criterion, bool(passed), detail))
    print(f"ACCEPTANCE {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def heat():
    return SpectralModel.heat()


@pytest.fixture(scope="session")
def heat_fs(heat):
    return solve_all(heat, StepGrid(1.0, 512, 3))


@pytest.fixture(scope="session")
def small_fs():
    model = SpectralModel.heat(modes=8)
    return solve_all(model, StepGrid(1.0, 64, 3))


@pytest.fixture(scope="session")
def default_noise():
    return NoiseModel.power_law(64, 2.0)
