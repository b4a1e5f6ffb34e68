import numpy as np
import pytest

from treerange.distributions import make_geometric_critical, make_jump_srw, make_offspring


@pytest.fixture(scope="session")
def geo():
    return make_geometric_critical()


@pytest.fixture(scope="session")
def binary():
    return make_offspring([(0, 0.5), (2, 0.5)], name="binary")


@pytest.fixture(scope="session")
def srw4():
    return make_jump_srw(4)


@pytest.fixture(scope="session")
def srw5():
    return make_jump_srw(5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

from hypothesis import settings

# numba compilation makes the first example slow
settings.register_profile("default", deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion."""
    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
