import numpy as np
import pytest

from schrolab.grid import build_grid, carve_regions


@pytest.fixture
def cube7():
    return build_grid((np.pi, np.pi, np.pi), (7, 7, 7))


@pytest.fixture
def cube9():
    return build_grid((np.pi, np.pi, np.pi), (9, 9, 9))


@pytest.fixture
def cube11():
    return build_grid((np.pi, np.pi, np.pi), (11, 11, 11))


@pytest.fixture
def part11(cube11):
    return carve_regions(cube11, [(np.pi / 4, 3 * np.pi / 4)] * 3, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS: dict[int, str] = {}


@pytest.fixture(scope="session")
def verdict():
    """Record and print one PASS/FAIL line per acceptance criterion."""

    def record(cid: int, ok: bool, detail: str) -> bool:
        line = f"C{cid:<2d} {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS[cid] = line
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[cid])
